//! Clustered narrowband mmWave channels, their DFT beamspace representation,
//! and the random-walk evolution of path angles over time.
//!
//! Angles are *spatial* angles `phi = (d / lambda) sin(theta)`, living in a
//! periodic domain of width one (default `[-1/2, 1/2]`). Array responses are
//! those of a uniform linear array:
//!
//! ```text
//! a(phi) = 1/sqrt(n) * [1, e^{j2 pi phi}, ..., e^{j2 pi (n-1) phi}]^H
//! ```
//!
//! The trailing Hermitian is applied literally, so entry `k` is
//! `e^{-j2 pi k phi} / sqrt(n)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cabs, cis, frob_sq, CMatrix, CVector, Real};

/// Antenna counts and element spacing of the transmit and receive ULAs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub element_spacing_over_wavelength: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            n_tx: 64,
            n_rx: 16,
            element_spacing_over_wavelength: 0.5,
        }
    }
}

impl ArrayGeometry {
    pub fn new(n_tx: usize, n_rx: usize) -> Result<Self> {
        let g = Self {
            n_tx,
            n_rx,
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::invalid("antenna counts must be >= 1"));
        }
        if !(self.element_spacing_over_wavelength > 0.0) {
            return Err(Error::invalid("element spacing ratio must be > 0"));
        }
        Ok(())
    }

    /// Map a physical angle (radians) to the spatial angle of this array.
    pub fn spatial_angle(&self, theta: f64) -> f64 {
        self.element_spacing_over_wavelength * theta.sin()
    }
}

/// Closed interval of admissible spatial angles. Angles are treated as
/// periodic with period equal to the interval width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleDomain {
    pub lo: f64,
    pub hi: f64,
}

impl Default for AngleDomain {
    fn default() -> Self {
        Self { lo: -0.5, hi: 0.5 }
    }
}

impl AngleDomain {
    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::invalid(format!(
                "angle domain [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Wrap onto `[lo, hi)`; values already inside the closed interval are
    /// returned unchanged.
    pub fn wrap(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            return x;
        }
        let w = self.width();
        let y = self.lo + (x - self.lo).rem_euclid(w);
        // rem_euclid can round up to exactly `w`
        if y >= self.hi {
            self.lo
        } else {
            y
        }
    }

    pub fn wrap_t<T: Real>(&self, x: T) -> T {
        T::of(self.wrap(x.f64()))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Saleh-Valenzuela cluster layout. Gains are `CN(0, gain_variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    pub n_rays: usize,
    #[serde(default)]
    pub angle_domain: AngleDomain,
    #[serde(default = "default_gain_variance")]
    pub gain_variance: f64,
    /// Half-width of the per-cluster ray spread. `None` draws every ray
    /// independently over the whole domain.
    #[serde(default = "default_spread")]
    pub cluster_spread: Option<f64>,
}

fn default_gain_variance() -> f64 {
    1.0
}

fn default_spread() -> Option<f64> {
    Some(0.02)
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            n_rays: 6,
            angle_domain: AngleDomain::default(),
            gain_variance: default_gain_variance(),
            cluster_spread: default_spread(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_rays == 0 {
            return Err(Error::invalid("cluster and ray counts must be >= 1"));
        }
        self.angle_domain.validate()?;
        if !(self.gain_variance > 0.0) {
            return Err(Error::invalid("gain variance must be > 0"));
        }
        if let Some(s) = self.cluster_spread {
            if !(s >= 0.0) {
                return Err(Error::invalid("cluster spread must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn n_paths(&self) -> usize {
        self.n_clusters * self.n_rays
    }

    /// Length of the flattened motion-feature vector (AoAs then AoDs).
    pub fn feature_dim(&self) -> usize {
        2 * self.n_paths()
    }
}

/// Spatial AoAs and AoDs of every path at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MotionFeatureState<T: Real> {
    pub aoa: Vec<T>,
    pub aod: Vec<T>,
    pub timestamp: u64,
}

impl<T: Real> MotionFeatureState<T> {
    pub fn n_paths(&self) -> usize {
        self.aoa.len()
    }

    /// `[aoa..., aod...]`
    pub fn flatten(&self) -> DVector<T> {
        DVector::from_iterator(
            self.aoa.len() + self.aod.len(),
            self.aoa.iter().chain(self.aod.iter()).copied(),
        )
    }

    /// Inverse of [`flatten`](Self::flatten); every angle is wrapped into
    /// `domain`.
    pub fn from_flat(v: &DVector<T>, timestamp: u64, domain: &AngleDomain) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::invalid("feature vector length must be even"));
        }
        let n = v.len() / 2;
        let aoa = v.rows(0, n).iter().map(|&x| domain.wrap_t(x)).collect();
        let aod = v.rows(n, n).iter().map(|&x| domain.wrap_t(x)).collect();
        Ok(Self { aoa, aod, timestamp })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Path<T: Real> {
    pub aod: T,
    pub aoa: T,
    pub gain: Complex<T>,
}

/// One (AoD, AoA, gain) triple per cluster-ray pair, cluster-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PathSet<T: Real> {
    pub n_clusters: usize,
    pub n_rays: usize,
    pub paths: Vec<Path<T>>,
}

impl<T: Real> PathSet<T> {
    pub fn motion_state(&self, timestamp: u64) -> MotionFeatureState<T> {
        MotionFeatureState {
            aoa: self.paths.iter().map(|p| p.aoa).collect(),
            aod: self.paths.iter().map(|p| p.aod).collect(),
            timestamp,
        }
    }

    /// Same gains, angles replaced by those of `state`.
    pub fn with_angles(&self, state: &MotionFeatureState<T>) -> Result<Self> {
        if state.aoa.len() != self.paths.len() || state.aod.len() != self.paths.len() {
            return Err(Error::invalid(format!(
                "motion state has {} paths, path set has {}",
                state.aoa.len(),
                self.paths.len()
            )));
        }
        let paths = self
            .paths
            .iter()
            .zip(state.aoa.iter().zip(state.aod.iter()))
            .map(|(p, (&aoa, &aod))| Path { aod, aoa, gain: p.gain })
            .collect();
        Ok(Self { paths, ..*self })
    }

    /// Keep every gain magnitude, draw a fresh uniform phase for each.
    pub fn redraw_phases<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for p in &mut self.paths {
            let phase = rng.random::<f64>() * 2.0 * PI;
            p.gain = cis(T::of(phase)).scale(cabs(p.gain));
        }
    }
}

/// Complex antenna-domain channel, `n_rx x n_tx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpatialChannel<T: Real>(pub CMatrix<T>);

/// Complex beamspace channel, `n_rx x n_tx`; row `i` is receive beam `i`,
/// column `j` transmit beam `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BeamspaceChannel<T: Real>(pub CMatrix<T>);

impl<T: Real> BeamspaceChannel<T> {
    pub fn zeros(geom: &ArrayGeometry) -> Self {
        Self(CMatrix::zeros(geom.n_rx, geom.n_tx))
    }

    pub fn energy(&self) -> T {
        frob_sq(&self.0)
    }
}

/// ULA response `a(phi)` of an `n`-element array.
pub fn steering_vector<T: Real>(phi: T, n: usize) -> Result<CVector<T>> {
    if n == 0 {
        return Err(Error::invalid("steering vector needs n >= 1"));
    }
    let scale = T::one() / T::of(n as f64).sqrt();
    let two_pi = T::two_pi();
    Ok(CVector::from_fn(n, |k, _| {
        cis(-two_pi * T::of(k as f64) * phi).scale(scale)
    }))
}

/// Draw `n_clusters * n_rays` paths. Cluster centres are uniform on the
/// angle domain; rays sit uniformly within `cluster_spread` of their centre
/// (wrapped), so each ray angle is marginally uniform on the domain.
pub fn generate_paths<T: Real, R: Rng + ?Sized>(cfg: &ClusterConfig, rng: &mut R) -> Result<PathSet<T>> {
    cfg.validate()?;
    let dom = cfg.angle_domain;
    let uniform = |rng: &mut R| dom.lo + rng.random::<f64>() * dom.width();
    let gain_sd = (cfg.gain_variance / 2.0).sqrt();
    let mut paths = Vec::with_capacity(cfg.n_paths());
    for _ in 0..cfg.n_clusters {
        let (c_aod, c_aoa) = (uniform(rng), uniform(rng));
        for _ in 0..cfg.n_rays {
            let (aod, aoa) = match cfg.cluster_spread {
                Some(s) => {
                    let d_aod = (2.0 * rng.random::<f64>() - 1.0) * s;
                    let d_aoa = (2.0 * rng.random::<f64>() - 1.0) * s;
                    (dom.wrap(c_aod + d_aod), dom.wrap(c_aoa + d_aoa))
                }
                None => (uniform(rng), uniform(rng)),
            };
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            paths.push(Path {
                aod: T::of(aod),
                aoa: T::of(aoa),
                gain: Complex::new(T::of(re * gain_sd), T::of(im * gain_sd)),
            });
        }
    }
    Ok(PathSet {
        n_clusters: cfg.n_clusters,
        n_rays: cfg.n_rays,
        paths,
    })
}

/// `sqrt(n_rx n_tx / n_paths)`
pub fn normalization_factor(geom: &ArrayGeometry, n_paths: usize) -> f64 {
    ((geom.n_rx * geom.n_tx) as f64 / n_paths as f64).sqrt()
}

/// `H = gamma * sum_p alpha_p a_r(phi_r,p) a_t(phi_t,p)^H`
pub fn assemble_channel<T: Real>(paths: &PathSet<T>, geom: &ArrayGeometry) -> Result<SpatialChannel<T>> {
    geom.validate()?;
    let n = paths.paths.len();
    if n == 0 || n != paths.n_clusters * paths.n_rays {
        return Err(Error::invalid(format!(
            "path set holds {} paths, expected {} x {}",
            n, paths.n_clusters, paths.n_rays
        )));
    }
    let gamma = T::of(normalization_factor(geom, n));
    let mut h = CMatrix::<T>::zeros(geom.n_rx, geom.n_tx);
    for p in &paths.paths {
        let ar = steering_vector(p.aoa, geom.n_rx)?.scale(gamma);
        let at = steering_vector(p.aod, geom.n_tx)?;
        // h += (alpha * ar) at^H
        h.gerc(p.gain, &ar, &at, Complex::new(T::one(), T::zero()));
    }
    Ok(SpatialChannel(h))
}

/// Spatial angle of DFT beam `k` for an `n`-element array:
/// `(k - (n-1)/2) / n`.
pub fn beam_angle(k: usize, n: usize) -> f64 {
    (k as f64 - (n as f64 - 1.0) / 2.0) / n as f64
}

/// Unitary DFT matrix whose row `k` is `a(beam_angle(k))^H`, so that beam `k`
/// of `U a(phi)` peaks at `phi = beam_angle(k)`.
pub fn dft_matrix<T: Real>(n: usize) -> Result<CMatrix<T>> {
    let mut u = CMatrix::zeros(n, n);
    for k in 0..n {
        let a = steering_vector(T::of(beam_angle(k, n)), n)?;
        for m in 0..n {
            u[(k, m)] = a[m].conj();
        }
    }
    Ok(u)
}

/// `H_b = U_r H U_t^H`
pub fn beamspace_transform<T: Real>(h: &SpatialChannel<T>, geom: &ArrayGeometry) -> Result<BeamspaceChannel<T>> {
    if h.0.shape() != (geom.n_rx, geom.n_tx) {
        return Err(Error::invalid(format!(
            "channel shape {:?} does not match geometry {}x{}",
            h.0.shape(),
            geom.n_rx,
            geom.n_tx
        )));
    }
    let ur = dft_matrix::<T>(geom.n_rx)?;
    let ut = dft_matrix::<T>(geom.n_tx)?;
    Ok(BeamspaceChannel(&ur * &h.0 * ut.adjoint()))
}

/// Per-step angle dynamics: `theta(t) = wrap(theta(t-1) + drift + sigma * w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionDynamics {
    pub drift: f64,
    pub sigma: f64,
}

impl Default for MotionDynamics {
    fn default() -> Self {
        Self {
            drift: 0.002,
            sigma: 0.003,
        }
    }
}

impl MotionDynamics {
    pub fn frozen() -> Self {
        Self { drift: 0.0, sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.drift.is_finite() {
            return Err(Error::invalid("motion sigma must be >= 0 and drift finite"));
        }
        Ok(())
    }
}

pub fn evolve_motion_state<T: Real, R: Rng + ?Sized>(
    prev: &MotionFeatureState<T>,
    dynamics: &MotionDynamics,
    domain: &AngleDomain,
    rng: &mut R,
) -> MotionFeatureState<T> {
    let mut step = |x: &T| {
        let w: f64 = if dynamics.sigma > 0.0 {
            StandardNormal.sample(rng)
        } else {
            0.0
        };
        T::of(domain.wrap(x.f64() + dynamics.drift + dynamics.sigma * w))
    };
    let aoa = prev.aoa.iter().map(&mut step).collect();
    let aod = prev.aod.iter().map(&mut step).collect();
    MotionFeatureState {
        aoa,
        aod,
        timestamp: prev.timestamp + 1,
    }
}

/// `len` consecutive states starting from `initial` (inclusive).
pub fn motion_trajectory<T: Real, R: Rng + ?Sized>(
    initial: MotionFeatureState<T>,
    dynamics: &MotionDynamics,
    domain: &AngleDomain,
    len: usize,
    rng: &mut R,
) -> Vec<MotionFeatureState<T>> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    out.push(initial);
    while out.len() < len {
        let next = evolve_motion_state(out.last().unwrap(), dynamics, domain, rng);
        out.push(next);
    }
    out
}

/// Dense real copy, handy for diagnostics.
pub fn magnitudes<T: Real>(h: &CMatrix<T>) -> DMatrix<T> {
    h.map(cabs)
}
