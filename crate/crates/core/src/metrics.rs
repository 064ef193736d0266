//! Error and dispersion metrics for beamspace channel estimates.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{frob_sq, CMatrix, Real};

/// `Q` true channels paired with their estimates.
#[derive(Debug, Clone)]
pub struct PredictionBatch<T: Real> {
    truths: Vec<CMatrix<T>>,
    estimates: Vec<CMatrix<T>>,
}

impl<T: Real> PredictionBatch<T> {
    pub fn new(truths: Vec<CMatrix<T>>, estimates: Vec<CMatrix<T>>) -> Result<Self> {
        if truths.is_empty() {
            return Err(Error::invalid("prediction batch is empty"));
        }
        if truths.len() != estimates.len() {
            return Err(Error::invalid(format!(
                "{} truths but {} estimates",
                truths.len(),
                estimates.len()
            )));
        }
        let shape = truths[0].shape();
        if truths.iter().chain(&estimates).any(|m| m.shape() != shape) {
            return Err(Error::invalid("channel shapes differ within the batch"));
        }
        Ok(Self { truths, estimates })
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn truths(&self) -> &[CMatrix<T>] {
        &self.truths
    }

    pub fn estimates(&self) -> &[CMatrix<T>] {
        &self.estimates
    }

    fn error_energy(&self) -> T {
        self.truths
            .iter()
            .zip(&self.estimates)
            .fold(T::zero(), |acc, (h, e)| acc + frob_sq(&(h - e)))
    }
}

/// Which energy the NMSE divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseNorm {
    /// Estimate energy.
    #[default]
    Estimate,
    /// True channel energy; the more common convention elsewhere.
    Truth,
}

/// `sqrt(sum_i ||H_i - H_hat_i||_F^2)`
pub fn rmse<T: Real>(batch: &PredictionBatch<T>) -> T {
    batch.error_energy().sqrt()
}

/// `sum_i ||H_i - H_hat_i||^2 / sum_i ||ref_i||^2`
pub fn nmse<T: Real>(batch: &PredictionBatch<T>, norm: NmseNorm) -> Result<T> {
    let refs = match norm {
        NmseNorm::Estimate => &batch.estimates,
        NmseNorm::Truth => &batch.truths,
    };
    let denom = refs.iter().fold(T::zero(), |acc, m| acc + frob_sq(m));
    if denom <= T::zero() {
        return Err(Error::UndefinedMetric(match norm {
            NmseNorm::Estimate => "nmse: estimates carry no energy".into(),
            NmseNorm::Truth => "nmse: channels carry no energy".into(),
        }));
    }
    Ok(batch.error_energy() / denom)
}

/// Distances `||H_hat_i - mu||_F` from the elementwise mean.
fn deviation_norms<T: Real>(preds: &[CMatrix<T>]) -> Result<Vec<T>> {
    if preds.len() < 2 {
        return Err(Error::invalid(format!("dispersion needs at least 2 predictions, got {}", preds.len())));
    }
    let shape = preds[0].shape();
    if preds.iter().any(|m| m.shape() != shape) {
        return Err(Error::invalid("prediction shapes differ"));
    }
    let mut mu = preds[0].clone();
    for p in &preds[1..] {
        mu += p;
    }
    mu /= Complex::new(T::of(preds.len() as f64), T::zero());
    Ok(preds.iter().map(|p| frob_sq(&(p - &mu)).sqrt()).collect())
}

/// Root-mean-square deviation of `M` predictions about their mean.
pub fn tau1<T: Real>(preds: &[CMatrix<T>]) -> Result<T> {
    let d = deviation_norms(preds)?;
    let m = T::of(d.len() as f64);
    Ok((d.iter().fold(T::zero(), |acc, &x| acc + x * x) / m).sqrt())
}

/// Mean absolute deviation of `M` predictions about their mean.
pub fn tau2<T: Real>(preds: &[CMatrix<T>]) -> Result<T> {
    let d = deviation_norms(preds)?;
    let m = T::of(d.len() as f64);
    Ok(d.iter().fold(T::zero(), |acc, &x| acc + x) / m)
}
