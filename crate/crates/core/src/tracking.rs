//! End-to-end beamspace channel tracking.
//!
//! A trial simulates one angle trajectory, turns it into delay-embedded
//! training windows, fits a forecaster on the first part and then tracks a
//! fixed number of slots right after the training data. At each tracked slot
//! the predicted angles are mapped to a beamspace support, and the gains on
//! that support are recovered from noisy pilot measurements by least
//! squares. The OMP baseline skips the forecaster and recovers the channel
//! from the same pilots by greedy sparse regression.
//!
//! Pilots are compressive measurements of `vec(H_b)` (column-major): a
//! `P x (N_r N_t)` matrix with orthonormal rows, so every pilot observation
//! carries unit average signal power per unit channel-entry power and the
//! nominal SNR is the per-measurement SNR.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{
    assemble_channel, beamspace_transform, generate_paths, motion_trajectory, ArrayGeometry,
    BeamspaceChannel, ClusterConfig, MotionDynamics, MotionFeatureState, PathSet,
};
use crate::ensemble::{ensemble_predict, fit_ensemble, EnsembleConfig, EnsembleModel, EnsembleState, SubsetStrategy};
use crate::error::{Error, Result};
use crate::metrics::{nmse, rmse, NmseNorm, PredictionBatch};
use crate::reservoir::{Activation, InitScheme, ReservoirConfig, ReservoirModel, ReservoirState};
use crate::scalar::{CMatrix, CVector, Real};
use crate::transceiver::{design_transceiver, spectral_efficiency, LinkBudget};

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_delay: usize,
    pub train_fraction: f64,
    /// Bookkeeping partition of all windows into contiguous chunks.
    pub n_batches: usize,
    /// Angle period. When set, every window and its target are shifted by
    /// whole periods to sit within half a period of the window's latest
    /// sample, so a path crossing the domain edge does not look like a jump
    /// of one full period. `None` keeps the wrapped values.
    pub unwrap_period: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_delay: 6,
            train_fraction: 0.75,
            n_batches: 250,
            unwrap_period: Some(1.0),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_delay == 0 {
            return Err(Error::invalid("n_delay must be >= 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if self.n_batches == 0 {
            return Err(Error::invalid("n_batches must be >= 1"));
        }
        if let Some(p) = self.unwrap_period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid("unwrap_period must be positive"));
            }
        }
        Ok(())
    }
}

/// Delay-embedded windows in chronological order. Window `i` has as input
/// the `n_delay` feature vectors preceding its target, oldest first (equal
/// modulo the angle period when unwrapping is on).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingDataset<T: Real> {
    pub inputs: Vec<DVector<T>>,
    pub targets: Vec<DVector<T>>,
    pub target_times: Vec<u64>,
    /// Windows `[0, split)` train, `[split, len)` are held out.
    pub split: usize,
    pub batches: Vec<Range<usize>>,
}

impl<T: Real> TrackingDataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.split
    }

    pub fn train_inputs(&self) -> &[DVector<T>] {
        &self.inputs[..self.split]
    }

    pub fn train_targets(&self) -> &[DVector<T>] {
        &self.targets[..self.split]
    }
}

pub fn build_dataset<T: Real>(trajectory: &[MotionFeatureState<T>], cfg: &DatasetConfig) -> Result<TrackingDataset<T>> {
    cfg.validate()?;
    let d = cfg.n_delay;
    if trajectory.len() < d + 1 {
        return Err(Error::invalid(format!(
            "trajectory of length {} is too short for {d} delays",
            trajectory.len()
        )));
    }
    let n_paths = trajectory[0].n_paths();
    if trajectory.iter().any(|s| s.n_paths() != n_paths || s.aod.len() != n_paths) {
        return Err(Error::invalid("trajectory states differ in path count"));
    }
    let flat: Vec<DVector<T>> = trajectory.iter().map(|s| s.flatten()).collect();
    let f = flat[0].len();
    let n = trajectory.len() - d;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut target_times = Vec::with_capacity(n);
    for t in d..trajectory.len() {
        let latest = &flat[t - 1];
        let near = |v: &DVector<T>| match cfg.unwrap_period {
            None => v.clone(),
            Some(p) => v.zip_map(latest, |x, r| {
                let (x, r) = (x.f64(), r.f64());
                T::of(r + (x - r) - p * ((x - r) / p).round())
            }),
        };
        let mut u = DVector::<T>::zeros(d * f);
        for (k, v) in flat[t - d..t].iter().enumerate() {
            u.rows_mut(k * f, f).copy_from(&near(v));
        }
        inputs.push(u);
        targets.push(near(&flat[t]));
        target_times.push(trajectory[t].timestamp);
    }
    let split = (cfg.train_fraction * n as f64).floor() as usize;
    let nb = cfg.n_batches.min(n);
    let (base, extra) = (n / nb, n % nb);
    let mut batches = Vec::with_capacity(nb);
    let mut start = 0;
    for b in 0..nb {
        let len = base + usize::from(b < extra);
        batches.push(start..start + len);
        start += len;
    }
    Ok(TrackingDataset {
        inputs,
        targets,
        target_times,
        split,
        batches,
    })
}

// ---------------------------------------------------------------- support

/// Nearest beam of an `n`-point DFT grid to spatial angle `phi`. The grid is
/// periodic with period one; exact ties go to the lower index.
pub fn nearest_grid_index(phi: f64, n: usize) -> usize {
    let x = phi * n as f64 + (n as f64 - 1.0) / 2.0;
    let fl = x.floor();
    let frac = x - fl;
    let m = n as i64;
    let lo = (fl as i64).rem_euclid(m) as usize;
    let hi = (fl as i64 + 1).rem_euclid(m) as usize;
    if frac < 0.5 {
        lo
    } else if frac > 0.5 {
        hi
    } else {
        lo.min(hi)
    }
}

/// `(rx_beam, tx_beam)` cells hit by the predicted paths, in path order,
/// deduplicated and capped at `cap`.
pub fn predict_support<T: Real>(chi: &MotionFeatureState<T>, geom: &ArrayGeometry, cap: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(cap.min(chi.n_paths()));
    for (aoa, aod) in chi.aoa.iter().zip(&chi.aod) {
        if out.len() >= cap {
            break;
        }
        let cell = (nearest_grid_index(aoa.f64(), geom.n_rx), nearest_grid_index(aod.f64(), geom.n_tx));
        if !out.contains(&cell) {
            out.push(cell);
        }
    }
    out
}

// ---------------------------------------------------------------- pilots

#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation<T: Real> {
    /// `P x (N_r N_t)` measurement matrix acting on column-major `vec(H_b)`.
    pub pilots: CMatrix<T>,
    pub observed: CVector<T>,
    pub noise_var: f64,
}

fn cgauss<T: Real, R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Complex<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::of(re * sd), T::of(im * sd))
}

/// Random pilot matrix with `n_pilots` orthonormal rows.
pub fn pilot_matrix<T: Real, R: Rng + ?Sized>(n_pilots: usize, dim: usize, rng: &mut R) -> Result<CMatrix<T>> {
    if n_pilots == 0 || n_pilots > dim {
        return Err(Error::invalid(format!("need 1 <= pilots <= {dim}, got {n_pilots}")));
    }
    let g = CMatrix::<T>::from_fn(dim, n_pilots, |_, _| cgauss(rng, 1.0));
    Ok(g.qr().q().adjoint())
}

/// Beam pilots restricted to the block of selected receive and transmit
/// beams. `symbols[(m, l)]` is symbol `l` on the `m`-th transmit beam.
struct BeamBlock<T: Real> {
    rx: Vec<usize>,
    tx: Vec<usize>,
    symbols: CMatrix<T>,
}

impl<T: Real> BeamBlock<T> {
    fn new(support: &[(usize, usize)], geom: &ArrayGeometry, length: usize) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("beam pilots need a non-empty support"));
        }
        if let Some(&(i, j)) = support.iter().find(|&&(i, j)| i >= geom.n_rx || j >= geom.n_tx) {
            return Err(Error::invalid(format!("support cell ({i}, {j}) lies outside the beam grid")));
        }
        let mut rx: Vec<usize> = support.iter().map(|c| c.0).collect();
        let mut tx: Vec<usize> = support.iter().map(|c| c.1).collect();
        rx.sort_unstable();
        rx.dedup();
        tx.sort_unstable();
        tx.dedup();
        if length < tx.len() {
            return Err(Error::invalid(format!(
                "{length} pilot symbols cannot separate {} transmit beams",
                tx.len()
            )));
        }
        let amp = 1.0 / (tx.len() as f64).sqrt();
        let symbols = CMatrix::from_fn(tx.len(), length, |m, l| {
            let ang = -std::f64::consts::TAU * (m * l) as f64 / length as f64;
            Complex::new(T::of(amp * ang.cos()), T::of(amp * ang.sin()))
        });
        Ok(Self { rx, tx, symbols })
    }

    fn local(&self, cell: (usize, usize)) -> (usize, usize) {
        let find = |v: &[usize], x| v.binary_search(&x).expect("cell belongs to the block");
        (find(&self.rx, cell.0), find(&self.tx, cell.1))
    }
}

/// Pilots aimed at a predicted support: orthogonal DFT sequences of length
/// `length` on the support's transmit beams (unit total power per symbol),
/// received on the support's receive beams. Row `l * |R| + k` is symbol `l`
/// seen on the `k`-th receive beam; every support cell gets an orthogonal
/// column, so least squares on the support sees no other cell.
pub fn beam_pilots<T: Real>(support: &[(usize, usize)], geom: &ArrayGeometry, length: usize) -> Result<CMatrix<T>> {
    let block = BeamBlock::<T>::new(support, geom, length)?;
    let nr = block.rx.len();
    let mut phi = CMatrix::<T>::zeros(nr * length, geom.n_rx * geom.n_tx);
    for (m, &t) in block.tx.iter().enumerate() {
        for (k, &r) in block.rx.iter().enumerate() {
            for l in 0..length {
                phi[(l * nr + k, t * geom.n_rx + r)] = block.symbols[(m, l)];
            }
        }
    }
    Ok(phi)
}

/// Send beam pilots over `support` through `truth` and estimate the support
/// gains by least squares. Equivalent to `observe_pilots` with
/// [`beam_pilots`] followed by [`reconstruct_ls`], without materializing the
/// pilot matrix.
pub fn beam_pilot_estimate<T: Real, R: Rng + ?Sized>(
    support: &[(usize, usize)],
    truth: &BeamspaceChannel<T>,
    geom: &ArrayGeometry,
    length: usize,
    noise_var: f64,
    rng: &mut R,
) -> Result<BeamspaceChannel<T>> {
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    let block = BeamBlock::<T>::new(support, geom, length)?;
    let nr = block.rx.len();
    let sub = CMatrix::from_fn(nr, block.tx.len(), |k, m| truth.0[(block.rx[k], block.tx[m])]);
    // Row l * |R| + k of the observation is column-major vec(sub * symbols).
    let received = sub * &block.symbols;
    let mut y = CVector::from_column_slice(received.as_slice());
    if noise_var > 0.0 {
        let sd = (noise_var / 2.0).sqrt();
        for v in y.iter_mut() {
            *v += cgauss::<T, _>(rng, sd);
        }
    }
    let local: Vec<(usize, usize)> = support.iter().map(|&c| block.local(c)).collect();
    let mut a = CMatrix::<T>::zeros(y.len(), support.len());
    for (c, &(k, m)) in local.iter().enumerate() {
        for l in 0..length {
            a[(l * nr + k, c)] = block.symbols[(m, l)];
        }
    }
    let x = full_rank_lstsq(a, &y).ok_or_else(|| Error::RankDeficient(support.to_vec()))?;
    let mut h = BeamspaceChannel::zeros(geom);
    for (&(i, j), v) in support.iter().zip(x.iter()) {
        h.0[(i, j)] = *v;
    }
    Ok(h)
}

/// `y = Phi vec(H_b) + n`, `n ~ CN(0, noise_var I)`.
pub fn observe_pilots<T: Real, R: Rng + ?Sized>(
    h_b: &BeamspaceChannel<T>,
    pilots: CMatrix<T>,
    noise_var: f64,
    rng: &mut R,
) -> Result<PilotObservation<T>> {
    if pilots.ncols() != h_b.0.len() {
        return Err(Error::invalid(format!(
            "pilot matrix has {} columns, channel has {} entries",
            pilots.ncols(),
            h_b.0.len()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    let h = CVector::from_column_slice(h_b.0.as_slice());
    let mut y = &pilots * h;
    if noise_var > 0.0 {
        let sd = (noise_var / 2.0).sqrt();
        for v in y.iter_mut() {
            *v += cgauss::<T, _>(rng, sd);
        }
    }
    Ok(PilotObservation {
        pilots,
        observed: y,
        noise_var,
    })
}

fn select_columns<T: Real>(m: &CMatrix<T>, cols: &[usize]) -> CMatrix<T> {
    CMatrix::from_fn(m.nrows(), cols.len(), |i, k| m[(i, cols[k])])
}

/// Least-squares solution through the SVD; `None` when `a` lacks full
/// column rank.
fn full_rank_lstsq<T: Real>(a: CMatrix<T>, y: &CVector<T>) -> Option<CVector<T>> {
    let (p, k) = a.shape();
    if k == 0 {
        return Some(CVector::zeros(0));
    }
    if p < k {
        return None;
    }
    // Tall systems are first reduced to their k x k triangular factor; the
    // singular values and the solution are unchanged.
    let (a, y) = if p > 2 * k {
        let qr = a.qr();
        let qy = qr.q().ad_mul(y);
        (qr.r(), qy)
    } else {
        (a, y.clone())
    };
    let y = &y;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = T::of(p.max(k) as f64) * T::default_epsilon() * smax;
    if svd.singular_values.min() <= tol {
        return None;
    }
    svd.solve(y, tol).ok()
}

/// Gains on `support` by least squares; zeros elsewhere.
pub fn reconstruct_ls<T: Real>(
    support: &[(usize, usize)],
    obs: &PilotObservation<T>,
    geom: &ArrayGeometry,
) -> Result<BeamspaceChannel<T>> {
    let dim = geom.n_rx * geom.n_tx;
    if obs.pilots.ncols() != dim {
        return Err(Error::invalid("pilot matrix does not match the array geometry"));
    }
    if obs.pilots.nrows() < support.len() {
        return Err(Error::invalid(format!(
            "{} pilots cannot resolve {} support cells",
            obs.pilots.nrows(),
            support.len()
        )));
    }
    if let Some(&(i, j)) = support.iter().find(|&&(i, j)| i >= geom.n_rx || j >= geom.n_tx) {
        return Err(Error::invalid(format!("support cell ({i}, {j}) lies outside the beam grid")));
    }
    let cols: Vec<usize> = support.iter().map(|&(i, j)| j * geom.n_rx + i).collect();
    let x = full_rank_lstsq(select_columns(&obs.pilots, &cols), &obs.observed)
        .ok_or_else(|| Error::RankDeficient(support.to_vec()))?;
    let mut h = BeamspaceChannel::zeros(geom);
    for (&(i, j), v) in support.iter().zip(x.iter()) {
        h.0[(i, j)] = *v;
    }
    Ok(h)
}

/// Greedy sparse regression result.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpTrace<T: Real> {
    pub coefficients: CVector<T>,
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    pub residual: CVector<T>,
    /// `||r||` before the first and after every iteration.
    pub residual_norms: Vec<T>,
}

/// Orthogonal matching pursuit with at most `sparsity` iterations.
///
/// Each iteration picks the column with the largest normalized correlation
/// to the residual (ties to the lower index), refits every selected
/// coefficient by least squares and updates the residual. Stops early once
/// the residual vanishes to working precision.
pub fn omp<T: Real>(dictionary: &CMatrix<T>, y: &CVector<T>, sparsity: usize) -> Result<OmpTrace<T>> {
    let (p, n) = dictionary.shape();
    if y.len() != p {
        return Err(Error::invalid(format!("observation has {} rows, dictionary {p}", y.len())));
    }
    if sparsity > p {
        return Err(Error::invalid(format!("sparsity {sparsity} exceeds {p} measurements")));
    }
    let col_norms: Vec<T> = (0..n).map(|j| dictionary.column(j).norm_squared()).collect();
    let y_norm = y.norm();
    let floor = T::of(16.0) * T::default_epsilon() * y_norm;
    let mut support = Vec::with_capacity(sparsity);
    let mut residual = y.clone();
    let mut norms = vec![y_norm];
    let mut coef = CVector::<T>::zeros(0);
    while support.len() < sparsity.min(n) && *norms.last().unwrap() > floor {
        let corr = dictionary.ad_mul(&residual);
        let mut best: Option<(usize, T)> = None;
        for j in 0..n {
            if col_norms[j] <= T::zero() || support.contains(&j) {
                continue;
            }
            let score = corr[j].norm_sqr() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);
        let a = select_columns(dictionary, &support);
        let Some(x) = full_rank_lstsq(a.clone(), y) else {
            // The new atom is dependent on the selected ones; drop it and stop.
            support.pop();
            break;
        };
        residual = y - &a * &x;
        norms.push(residual.norm());
        coef = x;
    }
    let mut coefficients = CVector::zeros(n);
    for (&j, v) in support.iter().zip(coef.iter()) {
        coefficients[j] = *v;
    }
    Ok(OmpTrace {
        coefficients,
        support,
        residual,
        residual_norms: norms,
    })
}

/// OMP over the pilot dictionary, reshaped back into a beamspace channel.
pub fn omp_estimate<T: Real>(obs: &PilotObservation<T>, sparsity: usize, geom: &ArrayGeometry) -> Result<BeamspaceChannel<T>> {
    if obs.pilots.ncols() != geom.n_rx * geom.n_tx {
        return Err(Error::invalid("pilot matrix does not match the array geometry"));
    }
    let trace = omp(&obs.pilots, &obs.observed, sparsity)?;
    Ok(BeamspaceChannel(CMatrix::from_column_slice(
        geom.n_rx,
        geom.n_tx,
        trace.coefficients.as_slice(),
    )))
}

// ---------------------------------------------------------------- scenario

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    ErmXavier,
    ErmRandom,
    Ensemble,
    Omp,
    PerfectCsi,
}

impl Predictor {
    pub const ALL: [Predictor; 5] = [
        Predictor::ErmXavier,
        Predictor::ErmRandom,
        Predictor::Ensemble,
        Predictor::Omp,
        Predictor::PerfectCsi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::ErmXavier => "erm_xavier",
            Predictor::ErmRandom => "erm_random",
            Predictor::Ensemble => "ensemble",
            Predictor::Omp => "omp",
            Predictor::PerfectCsi => "perfect_csi",
        }
    }

    /// Whether the predictor learns from the angle history.
    pub fn is_learned(self) -> bool {
        matches!(self, Predictor::ErmXavier | Predictor::ErmRandom | Predictor::Ensemble)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|p| p.name()).join(", ")
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown predictor `{s}`; valid names: {}", Self::valid_names())))
    }
}

/// Reservoir hyperparameters shared by every learned predictor. The input
/// dimension follows from the delay count and the path count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErmSettings {
    pub reservoir_size: usize,
    pub connectivity: f64,
    pub spectral_radius_target: f64,
    pub activation: Activation,
    pub washout: usize,
    pub ridge_lambda: f64,
}

impl Default for ErmSettings {
    fn default() -> Self {
        let r = ReservoirConfig::default();
        Self {
            reservoir_size: r.reservoir_size,
            connectivity: r.connectivity,
            spectral_radius_target: r.spectral_radius_target,
            activation: r.activation,
            washout: r.washout,
            ridge_lambda: r.ridge_lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSettings {
    pub m1: usize,
    pub subset_strategy: SubsetStrategy,
    pub block_len: usize,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            m1: e.m1,
            subset_strategy: e.subset_strategy,
            block_len: e.block_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfConfig {
    pub n_tx_rf: usize,
    pub n_rx_rf: usize,
    pub n_streams: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_tx_rf: 4,
            n_rx_rf: 4,
            n_streams: 4,
        }
    }
}

/// Everything that defines one tracking trial apart from its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub clusters: ClusterConfig,
    pub dynamics: MotionDynamics,
    pub rf: RfConfig,
    /// Trajectory length in time steps.
    pub samples: usize,
    pub dataset: DatasetConfig,
    pub tracked_steps: usize,
    /// Support cap `S`; defaults to the path count.
    pub sparsity: Option<usize>,
    /// Pilot count; defaults to `2 S`.
    pub pilots: Option<usize>,
    pub nmse_norm: NmseNorm,
    pub erm: ErmSettings,
    pub ensemble: EnsembleSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default(),
            clusters: ClusterConfig::default(),
            dynamics: MotionDynamics::default(),
            rf: RfConfig::default(),
            samples: 10_000,
            dataset: DatasetConfig::default(),
            tracked_steps: 20,
            sparsity: None,
            pilots: None,
            nmse_norm: NmseNorm::Estimate,
            erm: ErmSettings::default(),
            ensemble: EnsembleSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn sparsity(&self) -> usize {
        self.sparsity.unwrap_or_else(|| self.clusters.n_paths())
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.unwrap_or(2 * self.sparsity())
    }

    pub fn reservoir_config(&self, init_scheme: InitScheme) -> ReservoirConfig {
        let e = &self.erm;
        ReservoirConfig {
            reservoir_size: e.reservoir_size,
            connectivity: e.connectivity,
            spectral_radius_target: e.spectral_radius_target,
            activation: e.activation,
            washout: e.washout,
            ridge_lambda: e.ridge_lambda,
            input_dim: self.dataset.n_delay * self.clusters.feature_dim(),
            init_scheme,
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            m1: self.ensemble.m1,
            subset_strategy: self.ensemble.subset_strategy,
            block_len: self.ensemble.block_len,
            weak_config: self.reservoir_config(InitScheme::Xavier),
        }
    }

    /// Windows available for training once the trajectory is embedded.
    pub fn n_train_windows(&self) -> usize {
        let n = self.samples.saturating_sub(self.dataset.n_delay);
        (self.dataset.train_fraction * n as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |field: &str, e: Error| Error::Config(format!("{field}: {e}"));
        self.geometry.validate().map_err(|e| ctx("geometry", e))?;
        self.clusters.validate().map_err(|e| ctx("clusters", e))?;
        self.dynamics.validate().map_err(|e| ctx("dynamics", e))?;
        self.dataset.validate().map_err(|e| ctx("dataset", e))?;
        if let Some(p) = self.dataset.unwrap_period {
            let w = self.clusters.angle_domain.width();
            if (p - w).abs() > 1e-12 * w {
                return Err(Error::Config(format!(
                    "dataset.unwrap_period ({p}) must equal the angle domain width ({w})"
                )));
            }
        }
        self.reservoir_config(InitScheme::Xavier).validate().map_err(|e| ctx("erm", e))?;
        self.ensemble_config().validate().map_err(|e| ctx("ensemble", e))?;
        let rf = &self.rf;
        if rf.n_streams == 0 || rf.n_streams > rf.n_tx_rf.min(rf.n_rx_rf) {
            return Err(Error::Config("rf: need 1 <= n_streams <= min(n_tx_rf, n_rx_rf)".into()));
        }
        if rf.n_tx_rf > self.geometry.n_tx || rf.n_rx_rf > self.geometry.n_rx {
            return Err(Error::Config("rf: more RF chains than antennas".into()));
        }
        if self.tracked_steps == 0 {
            return Err(Error::Config("tracked_steps must be >= 1".into()));
        }
        let s = self.sparsity();
        let dim = self.geometry.n_tx * self.geometry.n_rx;
        if s == 0 {
            return Err(Error::Config("sparsity must be >= 1".into()));
        }
        if self.n_pilots() < s || self.n_pilots() > dim {
            return Err(Error::Config(format!(
                "pilots must lie in [sparsity, N_r N_t] = [{s}, {dim}], got {}",
                self.n_pilots()
            )));
        }
        if self.samples < self.dataset.n_delay + 1 {
            return Err(Error::Config("samples: trajectory shorter than the delay embedding".into()));
        }
        let n = self.samples - self.dataset.n_delay;
        let train = self.n_train_windows();
        if n - train < self.tracked_steps {
            return Err(Error::Config(format!(
                "samples: only {} held-out windows for {} tracked steps",
                n - train,
                self.tracked_steps
            )));
        }
        let need = self.erm.washout + self.reservoir_config(InitScheme::Xavier).input_dim;
        if train <= need {
            return Err(Error::Config(format!(
                "samples: {train} training windows, reservoir readout needs more than washout + input_dim = {need}"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- trials

/// Ground truth of one trial.
#[derive(Debug, Clone)]
pub struct TrialTruth<T: Real> {
    pub trajectory: Vec<MotionFeatureState<T>>,
    pub dataset: TrackingDataset<T>,
    /// True motion state at every tracked slot.
    pub states: Vec<MotionFeatureState<T>>,
    pub channels: Vec<BeamspaceChannel<T>>,
}

pub fn simulate_trial<T: Real, R: Rng + ?Sized>(scn: &ScenarioConfig, rng: &mut R) -> Result<TrialTruth<T>> {
    let paths = generate_paths::<T, _>(&scn.clusters, rng)?;
    simulate_trial_from(scn, paths, rng)
}

/// Trial starting from given paths. Angles follow the motion model; gain
/// magnitudes are kept and phases redrawn at every tracked slot.
pub fn simulate_trial_from<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    paths: PathSet<T>,
    rng: &mut R,
) -> Result<TrialTruth<T>> {
    scn.validate()?;
    let traj = motion_trajectory(
        paths.motion_state(0),
        &scn.dynamics,
        &scn.clusters.angle_domain,
        scn.samples,
        rng,
    );
    let dataset = build_dataset(&traj, &scn.dataset)?;
    let mut states = Vec::with_capacity(scn.tracked_steps);
    let mut channels = Vec::with_capacity(scn.tracked_steps);
    for w in dataset.split..dataset.split + scn.tracked_steps {
        let state = traj[w + scn.dataset.n_delay].clone();
        let mut p = paths.with_angles(&state)?;
        p.redraw_phases(rng);
        let h = assemble_channel(&p, &scn.geometry)?;
        channels.push(beamspace_transform(&h, &scn.geometry)?);
        states.push(state);
    }
    Ok(TrialTruth {
        trajectory: traj,
        dataset,
        states,
        channels,
    })
}

/// Compressive pilot observations (the OMP baseline) of every tracked slot
/// at one SNR: one random pilot matrix for the trial, fresh noise at every
/// slot.
pub fn observe_trial<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    truth: &TrialTruth<T>,
    snr_db: f64,
    rng: &mut R,
) -> Result<Vec<PilotObservation<T>>> {
    let noise_var = LinkBudget::from_snr_db(snr_db).sigma2;
    let dim = scn.geometry.n_tx * scn.geometry.n_rx;
    let phi = pilot_matrix(scn.n_pilots(), dim, rng)?;
    truth
        .channels
        .iter()
        .map(|h| observe_pilots(h, phi.clone(), noise_var, rng))
        .collect()
}

/// A trained angle forecaster.
#[derive(Debug, Clone)]
pub enum Forecaster<T: Real> {
    Single(ReservoirModel<T>),
    Ensemble(EnsembleModel<T>),
}

#[derive(Debug, Clone)]
pub enum ForecastState<T: Real> {
    Single(ReservoirState<T>),
    Ensemble(EnsembleState<T>),
}

impl<T: Real> Forecaster<T> {
    /// Consume one input window and predict the next feature vector.
    pub fn step(&self, state: &mut ForecastState<T>, input: &DVector<T>) -> Result<DVector<T>> {
        match (self, state) {
            (Forecaster::Single(m), ForecastState::Single(s)) => {
                let (next, y) = m.predict(s, input)?;
                *s = next;
                Ok(y)
            }
            (Forecaster::Ensemble(m), ForecastState::Ensemble(s)) => ensemble_predict(m, s, input),
            _ => Err(Error::invalid("forecaster and state kinds differ")),
        }
    }
}

/// Fit the forecaster of a learned predictor on the training windows.
/// Returns the model and the reservoir state at the end of training.
pub fn train_forecaster<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    predictor: Predictor,
    dataset: &TrackingDataset<T>,
    rng: &mut R,
) -> Result<(Forecaster<T>, ForecastState<T>)> {
    let (x, y) = (dataset.train_inputs(), dataset.train_targets());
    match predictor {
        Predictor::ErmXavier | Predictor::ErmRandom => {
            let scheme = if predictor == Predictor::ErmXavier {
                InitScheme::Xavier
            } else {
                InitScheme::UniformRandom
            };
            let mut model = ReservoirModel::new(scn.reservoir_config(scheme), rng)?;
            let summary = model.train_readout(x, y)?;
            Ok((Forecaster::Single(model), ForecastState::Single(summary.final_state)))
        }
        Predictor::Ensemble => {
            let (model, state) = fit_ensemble(&scn.ensemble_config(), x, y, rng)?;
            Ok((Forecaster::Ensemble(model), ForecastState::Ensemble(state)))
        }
        Predictor::Omp | Predictor::PerfectCsi => {
            Err(Error::invalid(format!("{predictor} does not use a forecaster")))
        }
    }
}

/// Predicted motion states for the first `n` held-out windows. The reservoir
/// keeps running from the end of training and always consumes the true
/// history.
pub fn forecast_tracked<T: Real>(
    forecaster: &Forecaster<T>,
    mut state: ForecastState<T>,
    scn: &ScenarioConfig,
    dataset: &TrackingDataset<T>,
) -> Result<Vec<MotionFeatureState<T>>> {
    let n = scn.tracked_steps;
    if dataset.n_test() < n {
        return Err(Error::invalid("not enough held-out windows"));
    }
    (dataset.split..dataset.split + n)
        .map(|w| {
            let y = forecaster.step(&mut state, &dataset.inputs[w])?;
            MotionFeatureState::from_flat(&y, dataset.target_times[w], &scn.clusters.angle_domain)
        })
        .collect()
}

/// Channel estimate of one slot. OMP works from the compressive
/// observation `obs`; learned predictors send beam pilots over their
/// predicted support, with noise of variance `obs.noise_var` drawn from
/// `noise`.
pub fn estimate_slot<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    predictor: Predictor,
    predicted: Option<&MotionFeatureState<T>>,
    truth: &BeamspaceChannel<T>,
    obs: &PilotObservation<T>,
    noise: &mut R,
) -> Result<BeamspaceChannel<T>> {
    match predictor {
        Predictor::PerfectCsi => Ok(truth.clone()),
        Predictor::Omp => omp_estimate(obs, scn.sparsity(), &scn.geometry),
        _ => {
            let chi = predicted.ok_or_else(|| Error::invalid(format!("{predictor} needs predicted angles")))?;
            let support = predict_support(chi, &scn.geometry, scn.sparsity());
            beam_pilot_estimate(&support, truth, &scn.geometry, scn.n_pilots(), obs.noise_var, noise)
        }
    }
}

/// Error and rate of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotScore<T: Real> {
    pub nmse: T,
    pub rmse: T,
    pub se: T,
}

pub fn score_slot<T: Real>(
    scn: &ScenarioConfig,
    truth: &BeamspaceChannel<T>,
    estimate: &BeamspaceChannel<T>,
    snr_db: f64,
) -> Result<SlotScore<T>> {
    let batch = PredictionBatch::new(vec![truth.0.clone()], vec![estimate.0.clone()])?;
    let (sel, bb) = design_transceiver(estimate, scn.rf.n_tx_rf, scn.rf.n_rx_rf, scn.rf.n_streams)?;
    Ok(SlotScore {
        nmse: nmse(&batch, scn.nmse_norm)?,
        rmse: rmse(&batch),
        se: spectral_efficiency(truth, &sel, &bb, &LinkBudget::from_snr_db(snr_db))?,
    })
}

/// Per-slot outcome of [`track_and_evaluate`].
#[derive(Debug, Clone)]
pub struct TrackedSlot<T: Real> {
    pub time_step: u64,
    pub truth: BeamspaceChannel<T>,
    pub estimate: BeamspaceChannel<T>,
    pub score: SlotScore<T>,
}

/// Independent random streams of one trial.
pub struct TrialRngs<'a, R: Rng + ?Sized> {
    pub channel: &'a mut R,
    pub noise: &'a mut R,
    pub model: &'a mut R,
}

/// Simulate, train, track and score one trial at one SNR.
pub fn track_and_evaluate<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    predictor: Predictor,
    snr_db: f64,
    rngs: TrialRngs<'_, R>,
) -> Result<Vec<TrackedSlot<T>>> {
    let truth = simulate_trial::<T, _>(scn, rngs.channel)?;
    let obs = observe_trial(scn, &truth, snr_db, rngs.noise)?;
    let predicted = if predictor.is_learned() {
        let (f, st) = train_forecaster(scn, predictor, &truth.dataset, rngs.model)?;
        Some(forecast_tracked(&f, st, scn, &truth.dataset)?)
    } else {
        None
    };
    evaluate_slots(scn, predictor, &truth, &obs, predicted.as_deref(), snr_db, rngs.noise)
}

/// Estimate and score every tracked slot given the compressive observations
/// and, for learned predictors, the forecast states. `noise` drives the
/// beam-pilot noise of learned predictors.
pub fn evaluate_slots<T: Real, R: Rng + ?Sized>(
    scn: &ScenarioConfig,
    predictor: Predictor,
    truth: &TrialTruth<T>,
    obs: &[PilotObservation<T>],
    predicted: Option<&[MotionFeatureState<T>]>,
    snr_db: f64,
    noise: &mut R,
) -> Result<Vec<TrackedSlot<T>>> {
    (0..truth.channels.len())
        .map(|k| {
            let h = &truth.channels[k];
            let estimate = estimate_slot(scn, predictor, predicted.map(|p| &p[k]), h, &obs[k], noise)?;
            let score = score_slot(scn, h, &estimate, snr_db)?;
            Ok(TrackedSlot {
                time_step: truth.states[k].timestamp,
                truth: h.clone(),
                estimate,
                score,
            })
        })
        .collect()
}

/// Boolean beam-grid mask of a support.
pub fn support_mask(support: &[(usize, usize)], geom: &ArrayGeometry) -> DMatrix<bool> {
    let mut m = DMatrix::from_element(geom.n_rx, geom.n_tx, false);
    for &(i, j) in support {
        m[(i, j)] = true;
    }
    m
}
