//! Hybrid analog-digital transceiver: analog beam selection on the lens
//! array, SVD baseband precoding/combining, received-signal synthesis and
//! achievable spectral efficiency.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::BeamspaceChannel;
use crate::error::{Error, Result};
use crate::scalar::{CMatrix, CVector, Real};

/// Indices of the beams wired to RF chains, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSelection {
    pub tx_beam_indices: Vec<usize>,
    pub rx_beam_indices: Vec<usize>,
}

impl BeamSelection {
    /// `S_t`, `n_tx x n_tx_rf` 0/1 matrix.
    pub fn tx_matrix<T: Real>(&self, n_tx: usize) -> CMatrix<T> {
        selection_matrix(&self.tx_beam_indices, n_tx)
    }

    /// `S_r`, `n_rx x n_rx_rf` 0/1 matrix.
    pub fn rx_matrix<T: Real>(&self, n_rx: usize) -> CMatrix<T> {
        selection_matrix(&self.rx_beam_indices, n_rx)
    }

    /// `S_r^H H_b S_t`
    pub fn reduce<T: Real>(&self, h_b: &BeamspaceChannel<T>) -> CMatrix<T> {
        let m = &h_b.0;
        CMatrix::from_fn(self.rx_beam_indices.len(), self.tx_beam_indices.len(), |r, c| {
            m[(self.rx_beam_indices[r], self.tx_beam_indices[c])]
        })
    }

    fn check(&self, h_b: &CMatrix<impl Real>) -> Result<()> {
        let (nr, nt) = h_b.shape();
        let ok = |idx: &[usize], n: usize| {
            !idx.is_empty() && idx.iter().all(|&i| i < n) && idx.windows(2).all(|w| w[0] < w[1])
        };
        if !ok(&self.tx_beam_indices, nt) || !ok(&self.rx_beam_indices, nr) {
            return Err(Error::invalid("beam selection indices out of range or not distinct"));
        }
        Ok(())
    }
}

fn selection_matrix<T: Real>(idx: &[usize], n: usize) -> CMatrix<T> {
    let mut s = CMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        s[(i, c)] = Complex::new(T::one(), T::zero());
    }
    s
}

/// Digital precoder `F_BB` (`n_tx_rf x n_s`) and combiner `W_BB`
/// (`n_rx_rf x n_s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BasebandMatrices<T: Real> {
    pub f_bb: CMatrix<T>,
    pub w_bb: CMatrix<T>,
    /// Set when the reduced channel had fewer than `n_s` significant
    /// singular values and the stream basis was completed arbitrarily.
    pub rank_deficient: bool,
}

impl<T: Real> BasebandMatrices<T> {
    pub fn n_streams(&self) -> usize {
        self.f_bb.ncols()
    }
}

/// Transmit power and noise power, both linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub rho: f64,
    pub sigma2: f64,
}

impl LinkBudget {
    pub fn new(rho: f64, sigma2: f64) -> Result<Self> {
        if !(rho > 0.0) || !(sigma2 > 0.0) {
            return Err(Error::invalid("rho and sigma2 must be > 0"));
        }
        Ok(Self { rho, sigma2 })
    }

    /// Unit transmit power, noise set from the SNR.
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            rho: 1.0,
            sigma2: 10f64.powf(-snr_db / 10.0),
        }
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.rho / self.sigma2).log10()
    }
}

/// Indices of the `k` largest energies, lowest index first among ties,
/// returned in ascending index order.
fn top_k(energy: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energy.len()).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut pick = order[..k].to_vec();
    pick.sort_unstable();
    pick
}

/// Pick the `n_rx_rf` rows and `n_tx_rf` columns of `h_b` with the largest
/// squared norms.
pub fn select_beams<T: Real>(h_b: &BeamspaceChannel<T>, n_tx_rf: usize, n_rx_rf: usize) -> Result<BeamSelection> {
    let (nr, nt) = h_b.0.shape();
    if n_tx_rf == 0 || n_rx_rf == 0 || n_tx_rf > nt || n_rx_rf > nr {
        return Err(Error::invalid(format!(
            "RF chains ({n_rx_rf} rx, {n_tx_rf} tx) must be in 1..=antennas ({nr} rx, {nt} tx)"
        )));
    }
    let rows: Vec<f64> = (0..nr)
        .map(|i| h_b.0.row(i).iter().map(|z| z.norm_sqr().f64()).sum())
        .collect();
    let cols: Vec<f64> = (0..nt)
        .map(|j| h_b.0.column(j).iter().map(|z| z.norm_sqr().f64()).sum())
        .collect();
    Ok(BeamSelection {
        tx_beam_indices: top_k(&cols, n_tx_rf),
        rx_beam_indices: top_k(&rows, n_rx_rf),
    })
}

/// Extend `cols` (orthonormal) to `k` orthonormal columns in `C^dim` using
/// canonical basis vectors.
fn complete_basis<T: Real>(mut cols: Vec<CVector<T>>, dim: usize, k: usize) -> Vec<CVector<T>> {
    let mut e = 0;
    while cols.len() < k && e < dim {
        let mut v = CVector::<T>::zeros(dim);
        v[e] = Complex::new(T::one(), T::zero());
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&v);
                v -= c * proj;
            }
        }
        let n = v.norm();
        if n > T::of(0.5) {
            cols.push(v.unscale(n));
        }
        e += 1;
    }
    cols
}

/// SVD baseband design on the reduced `n_rx_rf x n_tx_rf` channel: `F_BB`
/// from the top `n_s` right singular vectors, `W_BB` from the top `n_s` left
/// singular vectors, equal power, `||F_BB||_F^2 = n_s`.
pub fn design_baseband<T: Real>(h_reduced: &CMatrix<T>, n_s: usize) -> Result<BasebandMatrices<T>> {
    let (nr, nt) = h_reduced.shape();
    if n_s == 0 || n_s > nr.min(nt) {
        return Err(Error::invalid(format!(
            "n_s = {n_s} must be in 1..={} for a {nr}x{nt} reduced channel",
            nr.min(nt)
        )));
    }
    let svd = h_reduced.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^H").adjoint();
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(T::zero(), |m, &s| m.max(s));
    let tol = smax * T::of(1e-10 * nr.max(nt) as f64);
    let strong = sv.iter().take(n_s).filter(|&&s| s > tol && s > T::zero()).count();

    let mut f_cols: Vec<CVector<T>> = (0..strong).map(|k| v.column(k).into_owned()).collect();
    let mut w_cols: Vec<CVector<T>> = (0..strong).map(|k| u.column(k).into_owned()).collect();
    let rank_deficient = strong < n_s;
    if rank_deficient {
        log::warn!("reduced channel has rank {strong} < n_s = {n_s}; padding stream basis");
        f_cols = complete_basis(f_cols, nt, n_s);
        w_cols = complete_basis(w_cols, nr, n_s);
    }
    let mut f_bb = CMatrix::from_columns(&f_cols);
    let w_bb = CMatrix::from_columns(&w_cols);
    let fnorm = f_bb.norm();
    f_bb *= Complex::new(T::of(n_s as f64).sqrt() / fnorm, T::zero());
    Ok(BasebandMatrices {
        f_bb,
        w_bb,
        rank_deficient,
    })
}

/// Beam selection followed by baseband design: the full transceiver a
/// receiver would configure from a channel estimate.
pub fn design_transceiver<T: Real>(
    h_b: &BeamspaceChannel<T>,
    n_tx_rf: usize,
    n_rx_rf: usize,
    n_s: usize,
) -> Result<(BeamSelection, BasebandMatrices<T>)> {
    let sel = select_beams(h_b, n_tx_rf, n_rx_rf)?;
    let bb = design_baseband(&sel.reduce(h_b), n_s)?;
    Ok((sel, bb))
}

fn check_shapes<T: Real>(h_b: &BeamspaceChannel<T>, sel: &BeamSelection, bb: &BasebandMatrices<T>) -> Result<()> {
    sel.check(&h_b.0)?;
    if bb.f_bb.nrows() != sel.tx_beam_indices.len() || bb.w_bb.nrows() != sel.rx_beam_indices.len() {
        return Err(Error::invalid("baseband matrices do not match the RF-chain counts"));
    }
    if bb.f_bb.ncols() != bb.w_bb.ncols() {
        return Err(Error::invalid("precoder and combiner stream counts differ"));
    }
    Ok(())
}

/// `y = W^H S_r^H H_b x + W^H S_r^H n` with `x = sqrt(rho/N_s) S_t F_BB s`
/// and `n ~ CN(0, sigma2 I)`.
pub fn received_signal<T: Real, R: Rng + ?Sized>(
    h_b: &BeamspaceChannel<T>,
    sel: &BeamSelection,
    bb: &BasebandMatrices<T>,
    s: &CVector<T>,
    budget: &LinkBudget,
    rng: &mut R,
) -> Result<CVector<T>> {
    check_shapes(h_b, sel, bb)?;
    let n_s = bb.n_streams();
    if s.len() != n_s {
        return Err(Error::invalid(format!("symbol vector has {} entries, expected {n_s}", s.len())));
    }
    let (nr, nt) = h_b.0.shape();
    let st = sel.tx_matrix::<T>(nt);
    let sr = sel.rx_matrix::<T>(nr);
    let amp = T::of((budget.rho / n_s as f64).sqrt());
    let x = (&st * (&bb.f_bb * s)) * Complex::new(amp, T::zero());

    let sd = (budget.sigma2 / 2.0).sqrt();
    let noise = CVector::<T>::from_fn(nr, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex::new(T::of(re * sd), T::of(im * sd))
    });
    let combine = bb.w_bb.adjoint() * sr.adjoint();
    Ok(&combine * (&h_b.0 * x) + &combine * noise)
}

/// `log2 det(I + rho/(sigma2 N_s) R_n^{-1} A A^H)` with
/// `A = W^H S_r^H H_b S_t F_BB` and `R_n = W^H S_r^H S_r W`.
///
/// Evaluated as `log det(R_n + c A A^H) - log det(R_n)` through two Cholesky
/// factorizations; the second flag is set when `R_n` had to be regularized.
pub fn spectral_efficiency_flagged<T: Real>(
    h_b: &BeamspaceChannel<T>,
    sel: &BeamSelection,
    bb: &BasebandMatrices<T>,
    budget: &LinkBudget,
) -> Result<(T, bool)> {
    check_shapes(h_b, sel, bb)?;
    let n_s = bb.n_streams();
    let w_red = &bb.w_bb; // S_r W, restricted to the selected rows
    let a = w_red.adjoint() * sel.reduce(h_b) * &bb.f_bb;
    let mut r_n = w_red.adjoint() * w_red;
    let coef = T::of(budget.rho / (budget.sigma2 * n_s as f64));
    let mut regularized = false;
    let chol_rn = match Cholesky::new(r_n.clone()) {
        Some(c) => c,
        None => {
            log::warn!("noise covariance after combining is singular; regularizing");
            regularized = true;
            for i in 0..n_s {
                r_n[(i, i)] += Complex::new(T::of(1e-12), T::zero());
            }
            Cholesky::new(r_n.clone()).ok_or_else(|| Error::Singular("R_n".into()))?
        }
    };
    let sig = &r_n + (&a * a.adjoint()) * Complex::new(coef, T::zero());
    let chol_sig = Cholesky::new(sig).ok_or_else(|| Error::Singular("R_n + c A A^H".into()))?;
    let logdet = |l: &DMatrix<Complex<T>>| {
        (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].re.ln()) * T::of(2.0)
    };
    let nats = logdet(&chol_sig.l()) - logdet(&chol_rn.l());
    let bits = (nats / T::ln_2()).max(T::zero());
    Ok((bits, regularized))
}

pub fn spectral_efficiency<T: Real>(
    h_b: &BeamspaceChannel<T>,
    sel: &BeamSelection,
    bb: &BasebandMatrices<T>,
    budget: &LinkBudget,
) -> Result<T> {
    spectral_efficiency_flagged(h_b, sel, bb, budget).map(|(v, _)| v)
}
