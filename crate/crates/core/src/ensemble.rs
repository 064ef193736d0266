//! Stagewise boosting of reservoir weak learners.
//!
//! Stages are added one at a time. Stage `m` trains a fresh reservoir
//! readout on a resample of the training windows against the current
//! ensemble residual, then picks its weight `c_m` by exact 1-D least squares
//! over all training windows:
//!
//! ```text
//! Phi_m = Phi_{m-1} + c_m p_m,    c_m = <r_{m-1}, p_m> / <p_m, p_m>
//! ```
//!
//! The fitted ensemble predicts with the averaged weighted sum
//! `y(t) = (1/M) sum_m c_m p_m(t)`. So that this average is itself the
//! stagewise fit, the additive model `Phi` is fitted to `M * target`; the
//! fitting error `E` is always measured on the averaged prediction, which is
//! the quantity `c_m` minimizes.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{ModelFile, ReservoirConfig, ReservoirModel, ReservoirState, FORMAT_VERSION};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetStrategy {
    /// Sample post-washout windows with replacement.
    Bootstrap,
    /// Moving-block bootstrap: concatenate randomly placed runs of
    /// `block_len` consecutive windows.
    ContiguousBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub m1: usize,
    pub subset_strategy: SubsetStrategy,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// Template for every weak learner; each stage draws its own seed.
    pub weak_config: ReservoirConfig,
}

fn default_block_len() -> usize {
    50
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            m1: 8,
            subset_strategy: SubsetStrategy::Bootstrap,
            block_len: default_block_len(),
            weak_config: ReservoirConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 {
            return Err(Error::invalid("ensemble needs m1 >= 1"));
        }
        if self.block_len == 0 {
            return Err(Error::invalid("block_len must be >= 1"));
        }
        self.weak_config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Stage<T: Real> {
    pub weight: T,
    pub model: ReservoirModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EnsembleModel<T: Real> {
    pub stages: Vec<Stage<T>>,
    /// Training MSE of the averaged prediction after each stage.
    pub fitting_errors: Vec<T>,
}

/// One reservoir state per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState<T: Real> {
    pub states: Vec<ReservoirState<T>>,
}

/// `argmin_c ||r - c p||^2`; zero when `p` vanishes.
pub fn line_search<T: Real>(residual: &DMatrix<T>, pred: &DMatrix<T>) -> T {
    let pp = pred.dot(pred);
    if pp <= T::zero() {
        return T::zero();
    }
    residual.dot(pred) / pp
}

/// `(1/M) sum_m c_m p_m`
pub fn combine<T: Real>(weights: &[T], outputs: &[DVector<T>]) -> Result<DVector<T>> {
    if weights.is_empty() || weights.len() != outputs.len() {
        return Err(Error::invalid("need one output per stage weight"));
    }
    let dim = outputs[0].len();
    let mut acc = DVector::<T>::zeros(dim);
    for (&c, p) in weights.iter().zip(outputs) {
        if p.len() != dim {
            return Err(Error::invalid("stage outputs differ in length"));
        }
        acc.axpy(c, p, T::one());
    }
    Ok(acc / T::of(weights.len() as f64))
}

fn draw_subset<R: Rng + ?Sized>(cfg: &EnsembleConfig, lo: usize, hi: usize, rng: &mut R) -> Vec<usize> {
    let n = hi - lo;
    match cfg.subset_strategy {
        SubsetStrategy::Bootstrap => (0..n).map(|_| rng.random_range(lo..hi)).collect(),
        SubsetStrategy::ContiguousBlocks => {
            let b = cfg.block_len.min(n);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let start = rng.random_range(lo..=hi - b);
                out.extend(start..start + b);
            }
            out.truncate(n);
            out
        }
    }
}

/// Build `m1` weak learners with seeds drawn from `rng`, then fit them
/// stagewise.
pub fn fit_ensemble<T: Real, R: Rng + ?Sized>(
    cfg: &EnsembleConfig,
    inputs: &[DVector<T>],
    targets: &[DVector<T>],
    rng: &mut R,
) -> Result<(EnsembleModel<T>, EnsembleState<T>)> {
    cfg.validate()?;
    let learners = (0..cfg.m1)
        .map(|_| ReservoirModel::from_seed(cfg.weak_config, rng.random::<u64>()))
        .collect::<Result<Vec<_>>>()?;
    fit_stagewise(cfg, learners, inputs, targets, rng)
}

/// Stagewise fit of pre-built (untrained) weak learners.
pub fn fit_stagewise<T: Real, R: Rng + ?Sized>(
    cfg: &EnsembleConfig,
    learners: Vec<ReservoirModel<T>>,
    inputs: &[DVector<T>],
    targets: &[DVector<T>],
    rng: &mut R,
) -> Result<(EnsembleModel<T>, EnsembleState<T>)> {
    cfg.validate()?;
    if learners.len() != cfg.m1 {
        return Err(Error::invalid(format!("{} learners for m1 = {}", learners.len(), cfg.m1)));
    }
    let len = inputs.len();
    if targets.len() != len || len == 0 {
        return Err(Error::invalid("inputs and targets must be non-empty and equally long"));
    }
    let washout = cfg.weak_config.washout;
    if len <= washout + cfg.weak_config.input_dim {
        return Err(Error::invalid(format!(
            "need more than washout + input_dim = {} samples, got {len}",
            washout + cfg.weak_config.input_dim
        )));
    }
    let m1 = T::of(cfg.m1 as f64);
    let y = DMatrix::from_columns(targets);
    let scaled = &y * m1;
    let mut phi = DMatrix::<T>::zeros(y.nrows(), len);
    let n_fit = T::of(((len - washout) * y.nrows()) as f64);
    let error_of = |phi: &DMatrix<T>| {
        let d = phi.columns_range(washout..) / m1 - y.columns_range(washout..);
        d.norm_squared() / n_fit
    };

    let mut stages = Vec::with_capacity(cfg.m1);
    let mut fitting_errors: Vec<T> = Vec::with_capacity(cfg.m1);
    let mut finals = Vec::with_capacity(cfg.m1);
    for (m, mut model) in learners.into_iter().enumerate() {
        if model.config.input_dim != cfg.weak_config.input_dim {
            return Err(Error::invalid("weak learner input dimension differs from the template"));
        }
        let states = model.harvest_states(inputs, None)?;
        let residual = &scaled - &phi;
        let cols = draw_subset(cfg, washout, len, rng);
        model.fit_readout_columns(&states, &residual, &cols)?;
        let pred = model.readout(&states)?;

        let r_fit = residual.columns_range(washout..);
        let p_fit = pred.columns_range(washout..);
        let mut c = line_search(&r_fit.into_owned(), &p_fit.into_owned());
        if c == T::zero() {
            log::warn!("stage {m}: weak learner output vanishes on the training windows; weight set to 0");
        }
        let mut next = &phi + &pred * c;
        let mut err = error_of(&next);
        // c = 0 is always admissible; guard against rounding pushing the
        // error up by an ulp.
        let prev = fitting_errors.last().copied().unwrap_or_else(|| error_of(&phi));
        if err > prev {
            c = T::zero();
            next = phi.clone();
            err = prev;
        }
        phi = next;
        fitting_errors.push(err);
        finals.push(ReservoirState {
            res: states.column(len - 1).into_owned(),
        });
        stages.push(Stage { weight: c, model });
    }
    Ok((EnsembleModel { stages, fitting_errors }, EnsembleState { states: finals }))
}

const ENSEMBLE_FORMAT: &str = "beamtrack-ensemble";

impl<T: Real> EnsembleModel<T> {
    pub fn m1(&self) -> usize {
        self.stages.len()
    }

    pub fn weights(&self) -> Vec<T> {
        self.stages.iter().map(|s| s.weight).collect()
    }

    pub fn initial_state(&self) -> EnsembleState<T> {
        EnsembleState {
            states: self.stages.iter().map(|s| ReservoirState::zeros(s.model.size())).collect(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: ENSEMBLE_FORMAT.into(),
            version: FORMAT_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        ModelFile::read(path, ENSEMBLE_FORMAT)
    }
}

/// Advance every stage by one input and return the averaged weighted
/// prediction. `state` is updated in place.
pub fn ensemble_predict<T: Real>(
    model: &EnsembleModel<T>,
    state: &mut EnsembleState<T>,
    input: &DVector<T>,
) -> Result<DVector<T>> {
    if model.stages.is_empty() || model.stages.iter().any(|s| !s.model.is_trained()) {
        return Err(Error::Untrained);
    }
    if state.states.len() != model.stages.len() {
        return Err(Error::invalid("ensemble state does not match the stage count"));
    }
    let mut outputs = Vec::with_capacity(model.stages.len());
    for (stage, s) in model.stages.iter().zip(state.states.iter_mut()) {
        let (next, y) = stage.model.predict(s, input)?;
        *s = next;
        outputs.push(y);
    }
    combine(&model.weights(), &outputs)
}
