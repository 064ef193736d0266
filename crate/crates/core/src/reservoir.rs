//! Extreme reservoir machine.
//!
//! A fixed, sparse, randomly connected recurrent layer driven by the input
//! through `W_in`:
//!
//! ```text
//! res(t) = f(W_res res(t-1) + W_in u(t))
//! y(t)   = W_out res(t)
//! ```
//!
//! where `f` is the logistic function. `W_in` and `W_res` are drawn once and
//! never touched again; only `W_out` is learned, by one closed-form ridge
//! solve over the post-washout states. The readout state is the one that has
//! just consumed the most recent input, so `y(t)` forecasts the sample that
//! follows `u(t)`.
//!
//! Input weights default to the Xavier scheme, `N(0, 1/input_dim)`; the
//! uniform `U[-1, 1]` scheme is kept as the conventional baseline.

use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Schur};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cabs, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    /// Same logistic map as `Sigmoid`; kept as a separate name because both
    /// spellings are in common use.
    Logsig,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        T::one() / (T::one() + (-z).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `N(0, 1/input_dim)`
    Xavier,
    /// `U[-1, 1]`
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub reservoir_size: usize,
    pub connectivity: f64,
    pub spectral_radius_target: f64,
    pub activation: Activation,
    pub washout: usize,
    pub ridge_lambda: f64,
    pub input_dim: usize,
    pub init_scheme: InitScheme,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            reservoir_size: 200,
            connectivity: 0.1,
            spectral_radius_target: 0.9,
            activation: Activation::Sigmoid,
            washout: 50,
            ridge_lambda: 1e-6,
            input_dim: 576,
            init_scheme: InitScheme::Xavier,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reservoir_size == 0 || self.input_dim == 0 {
            return Err(Error::invalid("reservoir_size and input_dim must be >= 1"));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::invalid("connectivity must lie in (0, 1]"));
        }
        if !(self.spectral_radius_target > 0.0 && self.spectral_radius_target < 1.0) {
            return Err(Error::invalid("spectral_radius_target must lie in (0, 1)"));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::invalid("ridge_lambda must be >= 0"));
        }
        Ok(())
    }
}

/// Xavier input weights: `reservoir_size x input_dim`, i.i.d. `N(0, 1/input_dim)`.
pub fn init_xavier<T: Real, R: Rng + ?Sized>(input_dim: usize, reservoir_size: usize, rng: &mut R) -> DMatrix<T> {
    let sd = (1.0 / input_dim as f64).sqrt();
    DMatrix::from_fn(reservoir_size, input_dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::of(z * sd)
    })
}

/// Conventional input weights, i.i.d. `U[-1, 1]`.
pub fn init_uniform<T: Real, R: Rng + ?Sized>(input_dim: usize, reservoir_size: usize, rng: &mut R) -> DMatrix<T> {
    DMatrix::from_fn(reservoir_size, input_dim, |_, _| T::of(rng.random_range(-1.0..=1.0)))
}

/// Largest eigenvalue magnitude of a square real matrix.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 100 * m.nrows().max(10))
        .ok_or_else(|| Error::NoConvergence("Schur decomposition for spectral radius".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, z| acc.max(cabs(*z))))
}

const MAX_RESERVOIR_DRAWS: usize = 10;

/// Sparse recurrent weights: each entry is non-zero with probability
/// `connectivity`, non-zeros are `U[-1, 1]`, and the matrix is rescaled to
/// the target spectral radius. Draws whose spectral radius is zero are
/// retried up to ten times.
pub fn init_reservoir<T: Real, R: Rng + ?Sized>(
    reservoir_size: usize,
    connectivity: f64,
    spectral_radius_target: f64,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    if reservoir_size == 0 || !(connectivity > 0.0 && connectivity <= 1.0) {
        return Err(Error::invalid("invalid reservoir size or connectivity"));
    }
    if !(spectral_radius_target > 0.0 && spectral_radius_target < 1.0) {
        return Err(Error::invalid("spectral_radius_target must lie in (0, 1)"));
    }
    for _ in 0..MAX_RESERVOIR_DRAWS {
        let w = DMatrix::<f64>::from_fn(reservoir_size, reservoir_size, |_, _| {
            if rng.random::<f64>() < connectivity {
                rng.random_range(-1.0..=1.0)
            } else {
                0.0
            }
        });
        let w: DMatrix<T> = w.map(T::of);
        let radius = spectral_radius(&w)?;
        if radius > T::of(1e-12) {
            return Ok(w * (T::of(spectral_radius_target) / radius));
        }
    }
    Err(Error::invalid(format!(
        "reservoir draw degenerate (zero spectral radius) {MAX_RESERVOIR_DRAWS} times"
    )))
}

/// Reservoir activations, each strictly inside `(0, 1)` once stepped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReservoirState<T: Real> {
    pub res: DVector<T>,
}

impl<T: Real> ReservoirState<T> {
    pub fn zeros(n: usize) -> Self {
        Self { res: DVector::zeros(n) }
    }
}

/// Row-wise non-zeros of the recurrent matrix.
struct SparseRows<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseRows<T> {
    fn new(m: &DMatrix<T>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != T::zero()).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[T]) -> T {
        self.rows[i].iter().fold(T::zero(), |acc, &(j, v)| acc + v * x[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReservoirModel<T: Real> {
    pub config: ReservoirConfig,
    /// Seed the weights were drawn from, when known.
    pub seed: Option<u64>,
    /// `reservoir_size x input_dim`
    pub w_in: DMatrix<T>,
    /// `reservoir_size x reservoir_size`, fixed at construction.
    pub w_res: DMatrix<T>,
    /// `output_dim x reservoir_size`, present once trained.
    pub w_out: Option<DMatrix<T>>,
}

/// What training leaves behind besides the readout.
#[derive(Debug, Clone)]
pub struct TrainSummary<T: Real> {
    /// State after consuming the whole training sequence.
    pub final_state: ReservoirState<T>,
    /// Mean squared training residual over the post-washout samples.
    pub train_mse: T,
}

impl<T: Real> ReservoirModel<T> {
    pub fn new<R: Rng + ?Sized>(config: ReservoirConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w_in = match config.init_scheme {
            InitScheme::Xavier => init_xavier(config.input_dim, config.reservoir_size, rng),
            InitScheme::UniformRandom => init_uniform(config.input_dim, config.reservoir_size, rng),
        };
        let w_res = init_reservoir(
            config.reservoir_size,
            config.connectivity,
            config.spectral_radius_target,
            rng,
        )?;
        Ok(Self {
            config,
            seed: None,
            w_in,
            w_res,
            w_out: None,
        })
    }

    pub fn from_seed(config: ReservoirConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::new(config, &mut rng)?;
        m.seed = Some(seed);
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.config.reservoir_size
    }

    pub fn is_trained(&self) -> bool {
        self.w_out.is_some()
    }

    /// Run the reservoir over `inputs` starting from `initial` (zeros when
    /// `None`). Column `t` of the result is the state after input `t`.
    pub fn harvest_states(&self, inputs: &[DVector<T>], initial: Option<&ReservoirState<T>>) -> Result<DMatrix<T>> {
        let n = self.size();
        let d = self.config.input_dim;
        if let Some(bad) = inputs.iter().position(|u| u.len() != d) {
            return Err(Error::invalid(format!(
                "input {bad} has length {}, expected {d}",
                inputs[bad].len()
            )));
        }
        let len = inputs.len();
        let mut u = DMatrix::<T>::zeros(d, len);
        for (t, x) in inputs.iter().enumerate() {
            u.set_column(t, x);
        }
        // Input drive for every step at once, then the recurrence.
        let mut states = &self.w_in * u;
        let sparse = SparseRows::new(&self.w_res);
        let mut prev: Vec<T> = match initial {
            Some(s) if s.res.len() == n => s.res.iter().copied().collect(),
            Some(_) => return Err(Error::invalid("initial state has the wrong size")),
            None => vec![T::zero(); n],
        };
        let act = self.config.activation;
        for t in 0..len {
            let mut col = states.column_mut(t);
            for i in 0..n {
                col[i] = act.apply(col[i] + sparse.row_dot(i, &prev));
            }
            prev.copy_from_slice(col.as_slice());
        }
        Ok(states)
    }

    /// Closed-form ridge readout on the given state columns (repeats
    /// allowed): `W = Y S^T (S S^T + lambda I)^{-1}`.
    pub fn fit_readout_columns(&mut self, states: &DMatrix<T>, targets: &DMatrix<T>, columns: &[usize]) -> Result<()> {
        if states.ncols() != targets.ncols() {
            return Err(Error::invalid("states and targets disagree on sample count"));
        }
        if columns.is_empty() {
            return Err(Error::invalid("no samples selected for the readout"));
        }
        let s = states.select_columns(columns);
        let y = targets.select_columns(columns);
        self.w_out = Some(ridge_solve(&s, &y, self.config.ridge_lambda)?);
        Ok(())
    }

    /// Train the readout on `inputs[t] -> targets[t]`, discarding the first
    /// `washout` states. `W_in` and `W_res` are left as they are.
    pub fn train_readout(&mut self, inputs: &[DVector<T>], targets: &[DVector<T>]) -> Result<TrainSummary<T>> {
        let len = inputs.len();
        if targets.len() != len {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                len,
                targets.len()
            )));
        }
        if len <= self.config.washout + self.config.input_dim {
            return Err(Error::invalid(format!(
                "need more than washout + input_dim = {} samples, got {len}",
                self.config.washout + self.config.input_dim
            )));
        }
        let out_dim = targets[0].len();
        if targets.iter().any(|y| y.len() != out_dim) {
            return Err(Error::invalid("targets have inconsistent lengths"));
        }
        let states = self.harvest_states(inputs, None)?;
        let y = DMatrix::from_columns(targets);
        let cols: Vec<usize> = (self.config.washout..len).collect();
        self.fit_readout_columns(&states, &y, &cols)?;

        let resid = self.readout(&states.columns_range(self.config.washout..).into_owned())? - y.columns_range(self.config.washout..);
        let train_mse = resid.norm_squared() / T::of(resid.len() as f64);
        Ok(TrainSummary {
            final_state: ReservoirState {
                res: states.column(len - 1).into_owned(),
            },
            train_mse,
        })
    }

    /// `W_out` applied to each state column.
    pub fn readout(&self, states: &DMatrix<T>) -> Result<DMatrix<T>> {
        let w = self.w_out.as_ref().ok_or(Error::Untrained)?;
        Ok(w * states)
    }

    /// One reservoir step on `input`, then the readout.
    pub fn predict(&self, state: &ReservoirState<T>, input: &DVector<T>) -> Result<(ReservoirState<T>, DVector<T>)> {
        let w = self.w_out.as_ref().ok_or(Error::Untrained)?;
        let next = reservoir_step(state, input, self)?;
        let y = w * &next.res;
        Ok((next, y))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: RESERVOIR_FORMAT.into(),
            version: FORMAT_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        ModelFile::read(path, RESERVOIR_FORMAT)
    }
}

pub(crate) const FORMAT_VERSION: u32 = 1;
const RESERVOIR_FORMAT: &str = "beamtrack-reservoir";

/// Versioned envelope for any serialized model.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ModelFile<M> {
    pub format: String,
    pub version: u32,
    pub model: M,
}

impl<M: serde::de::DeserializeOwned> ModelFile<M> {
    /// Read a file, checking format and version before decoding the body.
    pub(crate) fn read(path: &Path, format: &str) -> Result<M> {
        let text = fs::read_to_string(path)?;
        let header: ModelFile<serde::de::IgnoredAny> = serde_json::from_str(&text)?;
        header.check(format)?;
        let file: ModelFile<M> = serde_json::from_str(&text)?;
        Ok(file.model)
    }
}

impl<M> ModelFile<M> {
    pub(crate) fn check(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::Schema(format!("expected a {format} file, found {}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported {format} version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }
}

/// `res' = f(W_res res + W_in u)`
pub fn reservoir_step<T: Real>(
    prev: &ReservoirState<T>,
    input: &DVector<T>,
    model: &ReservoirModel<T>,
) -> Result<ReservoirState<T>> {
    if prev.res.len() != model.size() || input.len() != model.config.input_dim {
        return Err(Error::invalid("state or input dimension mismatch"));
    }
    let act = model.config.activation;
    let z = &model.w_res * &prev.res + &model.w_in * input;
    Ok(ReservoirState {
        res: z.map(|v| act.apply(v)),
    })
}

/// Solve `min_W ||Y - W S||_F^2 + lambda ||W||_F^2` for `W`.
/// `s` is `features x samples`, `y` is `outputs x samples`.
pub fn ridge_solve<T: Real>(s: &DMatrix<T>, y: &DMatrix<T>, lambda: f64) -> Result<DMatrix<T>> {
    let n = s.nrows();
    let mut gram = s * s.transpose();
    for i in 0..n {
        gram[(i, i)] += T::of(lambda);
    }
    let cross = s * y.transpose(); // features x outputs
    let singular = || {
        Error::Singular(format!(
            "ridge normal matrix ({n}x{n}) is not positive definite at lambda = {lambda}; use ridge_lambda > 0"
        ))
    };
    let chol = Cholesky::new(gram).ok_or_else(singular)?;
    if lambda == 0.0 {
        let l = chol.l_dirty();
        let diag: Vec<T> = (0..n).map(|i| l[(i, i)]).collect();
        let dmax = diag.iter().fold(T::zero(), |m, &d| m.max(d));
        let dmin = diag.iter().fold(dmax, |m, &d| m.min(d));
        if dmin <= dmax * T::of(1e-7) {
            return Err(singular());
        }
    }
    Ok(chol.solve(&cross).transpose())
}
