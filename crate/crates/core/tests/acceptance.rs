//! Acceptance battery. Each test prints one `PASS`/`FAIL` line for its
//! criterion, straight to stdout so the verdict shows without `--nocapture`.
//! A `FAIL` also fails the test when `BEAMTRACK_STRICT_ACCEPTANCE` is set.
//! Tolerances are fixed here and must not be loosened to make a run pass.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use beamtrack::channel::{assemble_channel, beamspace_transform, generate_paths, ArrayGeometry, ClusterConfig};
use beamtrack::ensemble::{fit_ensemble, line_search, EnsembleConfig};
use beamtrack::experiment::{run_sweep, run_sweep_to_files, se_curve, ExperimentConfig, ResultRecord};
use beamtrack::reservoir::{init_xavier, ReservoirConfig, ReservoirModel};
use beamtrack::scalar::CMatrix;
use beamtrack::tracking::{omp, Predictor};
use beamtrack::transceiver::{spectral_efficiency, BasebandMatrices, BeamSelection, LinkBudget};
use beamtrack::channel::BeamspaceChannel;

// Criterion 1
const XAVIER_SAMPLES: usize = 100_000;
const XAVIER_INPUT_DIM: usize = 576;
const XAVIER_VAR_REL_TOL: f64 = 0.05;
const XAVIER_MEAN_SIGMAS: f64 = 3.0;
const XAVIER_BUDGET: Duration = Duration::from_secs(1);
// Criterion 2
const UNITARY_CHANNELS: usize = 1000;
const UNITARY_TOL: f64 = 1e-10;
const UNITARY_BUDGET: Duration = Duration::from_secs(10);
// Criterion 3
const SCALAR_SE_TOL: f64 = 1e-9;
const SE_BUDGET: Duration = Duration::from_secs(1);
// Criterion 4
const RIDGE_NEURONS: usize = 5;
const RIDGE_STEPS: usize = 50;
const RIDGE_ORACLE_TOL: f64 = 1e-6;
const RIDGE_REALIZABLE_TOL: f64 = 1e-8;
// Criterion 5
const LINE_GRID_STEP: f64 = 1e-4;
const LINE_SEARCH_TOL: f64 = 1e-3;
const BOOST_BATTERY: u64 = 100;
// Criterion 6
const OMP_INSTANCES: usize = 100;
// Criterion 7
const NMSE_SEEDS: usize = 50;
const NMSE_SNR_DB: f64 = 15.0;
const SIGNIFICANCE: f64 = 0.05;
// Criterion 8
const DISPERSION_DATASETS: usize = 20;
const DISPERSION_FITS: usize = 30;
const DISPERSION_SAMPLES: usize = 1500;
const MIN_REDUCTION: f64 = 0.10;
// Criterion 9
const SE_SEEDS: usize = 20;

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    if !pass && std::env::var_os("BEAMTRACK_STRICT_ACCEPTANCE").is_some() {
        panic!("{line}");
    }
}

#[test]
fn criterion_01_xavier_variance() {
    let start = Instant::now();
    let rows = XAVIER_SAMPLES.div_ceil(XAVIER_INPUT_DIM);
    let w = init_xavier::<f64, _>(XAVIER_INPUT_DIM, rows, &mut ChaCha8Rng::seed_from_u64(1));
    let v: Vec<f64> = w.iter().copied().take(XAVIER_SAMPLES).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target = 1.0 / XAVIER_INPUT_DIM as f64;
    let elapsed = start.elapsed();
    let var_ok = (var / target - 1.0).abs() < XAVIER_VAR_REL_TOL;
    let mean_bound = XAVIER_MEAN_SIGMAS * target.sqrt() / n.sqrt();
    let mean_ok = mean.abs() < mean_bound;
    let pass = var_ok && mean_ok && elapsed < XAVIER_BUDGET && v.len() == XAVIER_SAMPLES;
    report(
        1,
        pass,
        &format!(
            "var {var:.4e} vs {target:.4e} (rel {:.2}%), |mean| {:.2e} < {mean_bound:.2e}, {elapsed:?}",
            100.0 * (var / target - 1.0),
            mean.abs()
        ),
    );
}

#[test]
fn criterion_02_beamspace_unitarity() {
    let start = Instant::now();
    let geom = ArrayGeometry::new(64, 16).unwrap();
    let clusters = ClusterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..UNITARY_CHANNELS {
        let paths = generate_paths::<f64, _>(&clusters, &mut rng).unwrap();
        let h = assemble_channel(&paths, &geom).unwrap();
        let hb = beamspace_transform(&h, &geom).unwrap();
        worst = worst.max((hb.0.norm() - h.0.norm()).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst < UNITARY_TOL && elapsed < UNITARY_BUDGET;
    report(
        2,
        pass,
        &format!("max | ||H_b|| - ||H|| | = {worst:.2e} over {UNITARY_CHANNELS} channels, {elapsed:?}"),
    );
}

#[test]
fn criterion_03_spectral_efficiency() {
    let start = Instant::now();
    let one = CMatrix::<f64>::from_element(1, 1, Complex::new(1.0, 0.0));
    let h = BeamspaceChannel(one.clone());
    let sel = BeamSelection {
        tx_beam_indices: vec![0],
        rx_beam_indices: vec![0],
    };
    let bb = BasebandMatrices {
        f_bb: one.clone(),
        w_bb: one,
        rank_deficient: false,
    };
    let se = spectral_efficiency(&h, &sel, &bb, &LinkBudget::from_snr_db(15.0)).unwrap();
    let want = (1.0 + 10f64.powf(1.5)).log2();
    let closed_ok = (se - want).abs() < SCALAR_SE_TOL;

    let mut cfg = ExperimentConfig::quick();
    cfg.trials = 2;
    let grid: Vec<f64> = (0..=6).map(|k| 5.0 * k as f64).collect();
    let curve = se_curve(&cfg, Predictor::PerfectCsi, &grid).unwrap();
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1);
    let elapsed = start.elapsed();
    let pass = closed_ok && monotone && elapsed < SE_BUDGET;
    let pts: Vec<String> = curve.iter().map(|(s, v)| format!("{s}:{v:.2}")).collect();
    report(
        3,
        pass,
        &format!(
            "scalar SE {se:.12} vs {want:.12}; perfect-CSI curve [{}] monotone = {monotone}; {elapsed:?}",
            pts.join(" ")
        ),
    );
}

/// Conjugate gradients on `(S S^T + lambda I) w = S y` for every output row.
fn cg_ridge(s: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = s.nrows();
    let a = s * s.transpose() + DMatrix::identity(n, n) * lambda;
    let mut w = DMatrix::zeros(y.nrows(), n);
    for o in 0..y.nrows() {
        let b: DVector<f64> = s * y.row(o).transpose();
        let mut x = DVector::zeros(n);
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        for _ in 0..10 * n {
            if rr.sqrt() <= 1e-15 * b.norm() {
                break;
            }
            let ap = &a * &p;
            let alpha = rr / p.dot(&ap);
            x += &p * alpha;
            r -= &ap * alpha;
            let next = r.dot(&r);
            p = &r + &p * (next / rr);
            rr = next;
        }
        w.set_row(o, &x.transpose());
    }
    w
}

#[test]
fn criterion_04_ridge_readout_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = ReservoirConfig {
        reservoir_size: RIDGE_NEURONS,
        connectivity: 0.6,
        input_dim: 2,
        washout: 0,
        ridge_lambda: 1e-6,
        ..ReservoirConfig::default()
    };
    let inputs: Vec<DVector<f64>> = (0..RIDGE_STEPS)
        .map(|t| DVector::from_vec(vec![(0.3 * t as f64).sin(), (0.17 * t as f64).cos()]))
        .collect();
    let targets: Vec<DVector<f64>> = (0..RIDGE_STEPS)
        .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
        .collect();

    let mut model = ReservoirModel::<f64>::new(config, &mut rng).unwrap();
    model.train_readout(&inputs, &targets).unwrap();
    let s = model.harvest_states(&inputs, None).unwrap();
    let y = DMatrix::from_columns(&targets);
    let oracle = cg_ridge(&s, &y, config.ridge_lambda);
    let gap = (model.w_out.as_ref().unwrap() - &oracle).amax();

    // Realizable targets at lambda = 0.
    let mut exact = ReservoirModel::<f64>::new(ReservoirConfig { ridge_lambda: 0.0, ..config }, &mut rng).unwrap();
    let s0 = exact.harvest_states(&inputs, None).unwrap();
    let w_true = DMatrix::from_fn(3, RIDGE_NEURONS, |_, _| rng.random_range(-2.0..2.0));
    let y0 = &w_true * &s0;
    let t0: Vec<DVector<f64>> = y0.column_iter().map(|c| c.into_owned()).collect();
    exact.train_readout(&inputs, &t0).unwrap();
    let resid = (exact.readout(&s0).unwrap() - &y0).amax();

    let pass = gap < RIDGE_ORACLE_TOL && resid < RIDGE_REALIZABLE_TOL;
    report(
        4,
        pass,
        &format!("closed form vs CG oracle max gap {gap:.2e}; realizable residual at lambda=0 {resid:.2e}"),
    );
}

fn small_problem(seed: u64, len: usize) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..6.0);
    let x: Vec<f64> = (0..len + 1)
        .map(|t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (0.2 * t as f64 + phase).sin() + 0.1 * z
        })
        .collect();
    let inputs = (0..len).map(|t| DVector::from_vec(vec![x[t]])).collect();
    let targets = (0..len).map(|t| DVector::from_vec(vec![x[t + 1], x[t] * x[t + 1]])).collect();
    (inputs, targets)
}

fn weak_config() -> ReservoirConfig {
    ReservoirConfig {
        reservoir_size: 12,
        connectivity: 0.3,
        input_dim: 1,
        washout: 10,
        ridge_lambda: 1e-4,
        ..ReservoirConfig::default()
    }
}

#[test]
fn criterion_05_boosting_line_search() {
    // Stage weights against an exhaustive grid on three-stage fits.
    let mut worst_gap = 0.0f64;
    for seed in 0..5 {
        let (inputs, targets) = small_problem(seed, 200);
        let cfg = EnsembleConfig {
            m1: 3,
            weak_config: weak_config(),
            ..EnsembleConfig::default()
        };
        let (model, _) = fit_ensemble(&cfg, &inputs, &targets, &mut ChaCha8Rng::seed_from_u64(50 + seed)).unwrap();
        let w = cfg.weak_config.washout;
        let y = DMatrix::from_columns(&targets) * cfg.m1 as f64;
        let mut phi = DMatrix::<f64>::zeros(y.nrows(), y.ncols());
        for stage in &model.stages {
            let p = stage.model.readout(&stage.model.harvest_states(&inputs, None).unwrap()).unwrap();
            let r = (&y - &phi).columns_range(w..).into_owned();
            let pf = p.columns_range(w..).into_owned();
            let cost = |c: f64| (&r - &pf * c).norm_squared();
            let analytic = line_search(&r, &pf);
            let (lo, hi) = (analytic.min(0.0) - 2.0, analytic.max(0.0) + 2.0);
            let steps = ((hi - lo) / LINE_GRID_STEP).ceil() as usize;
            let best = (0..=steps)
                .map(|k| lo + k as f64 * LINE_GRID_STEP)
                .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
                .unwrap();
            worst_gap = worst_gap.max((best - stage.weight).abs());
            phi += &p * stage.weight;
        }
    }

    // Monotone fitting errors over a seed battery.
    let mut violations = 0;
    for seed in 0..BOOST_BATTERY {
        let (inputs, targets) = small_problem(1000 + seed, 150);
        let cfg = EnsembleConfig {
            m1: 5,
            weak_config: weak_config(),
            ..EnsembleConfig::default()
        };
        let (model, _) = fit_ensemble(&cfg, &inputs, &targets, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if model.fitting_errors.windows(2).any(|e| e[1] > e[0]) {
            violations += 1;
        }
    }
    let pass = worst_gap < LINE_SEARCH_TOL && violations == 0;
    report(
        5,
        pass,
        &format!(
            "max |c - grid argmin| = {worst_gap:.2e}; non-monotone error sequences {violations}/{BOOST_BATTERY}"
        ),
    );
}

#[test]
fn criterion_06_omp_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, s) = (32, 5);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..OMP_INSTANCES {
        let g = CMatrix::<f64>::from_fn(n, n, |_, _| {
            Complex::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let d = g.qr().q();
        let mut x = nalgebra::DVector::<Complex<f64>>::zeros(n);
        let mut support: Vec<usize> = Vec::new();
        while support.len() < s {
            let j = rng.random_range(0..n);
            if !support.contains(&j) {
                support.push(j);
                let mag: f64 = rng.random_range(0.5..2.0);
                x[j] = Complex::from_polar(mag, rng.random_range(0.0..6.28));
            }
        }
        let y = &d * &x;
        let t = omp(&d, &y, s).unwrap();
        let err = (&t.coefficients - &x).norm();
        worst = worst.max(err);
        let monotone = t.residual_norms.windows(2).all(|w| w[1] <= w[0]);
        let mut got = t.support.clone();
        got.sort_unstable();
        support.sort_unstable();
        if err > 1e-10 || !monotone || got != support || t.residual_norms.len() != s + 1 {
            failures += 1;
        }
    }
    let pass = failures == 0;
    report(
        6,
        pass,
        &format!("{failures}/{OMP_INSTANCES} instances off; worst coefficient error {worst:.2e} after {s} iterations"),
    );
}

/// Per-seed mean of `field` for one predictor, in seed order.
fn per_seed(records: &[ResultRecord], predictor: Predictor, snr: f64, field: fn(&ResultRecord) -> f64) -> Vec<f64> {
    let mut seeds: Vec<u64> = Vec::new();
    for r in records {
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    seeds
        .iter()
        .map(|&s| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.seed == s && r.snr_db == snr && r.predictor == predictor.name())
                .map(field)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided paired t-test of `mean(lower) < mean(higher)`; returns the
/// p-value.
fn paired_p(lower: &[f64], higher: &[f64]) -> f64 {
    let d: Vec<f64> = higher.iter().zip(lower).map(|(h, l)| h - l).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (sd / n.sqrt());
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

#[test]
fn criterion_07_nmse_ordering() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::reference();
    cfg.trials = NMSE_SEEDS;
    cfg.snr_grid_db = vec![NMSE_SNR_DB];
    cfg.dispersion_fits = 1;
    cfg.jobs = 0;
    let order = [Predictor::Ensemble, Predictor::ErmXavier, Predictor::ErmRandom, Predictor::Omp];
    cfg.predictors = order.to_vec();
    let records = run_sweep(&cfg).unwrap();
    let nmse: Vec<Vec<f64>> = order.iter().map(|&p| per_seed(&records, p, NMSE_SNR_DB, |r| r.nmse)).collect();

    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..order.len() - 1 {
        let p = paired_p(&nmse[k], &nmse[k + 1]);
        let ok = mean(&nmse[k]) <= mean(&nmse[k + 1]) && p < SIGNIFICANCE;
        pass &= ok;
        parts.push(format!(
            "{} {:.4} <= {} {:.4} (p = {p:.3}{})",
            order[k],
            mean(&nmse[k]),
            order[k + 1],
            mean(&nmse[k + 1]),
            if ok { "" } else { ", violated" }
        ));
    }
    report(
        7,
        pass,
        &format!(
            "NMSE at {NMSE_SNR_DB} dB over {NMSE_SEEDS} paired seeds: {}; {:.0?}",
            parts.join("; "),
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_08_dispersion_reduction() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::reference();
    cfg.trials = DISPERSION_DATASETS;
    cfg.snr_grid_db = vec![15.0];
    cfg.dispersion_fits = DISPERSION_FITS;
    cfg.scenario.samples = DISPERSION_SAMPLES;
    cfg.jobs = 0;
    cfg.predictors = vec![Predictor::ErmXavier, Predictor::ErmRandom, Predictor::Ensemble];
    let records = run_sweep(&cfg).unwrap();
    let tau = |p: Predictor, f: fn(&ResultRecord) -> f64| mean(&per_seed(&records, p, 15.0, f));
    let t2 = |p| tau(p, |r| r.tau2);
    let t1 = |p| tau(p, |r| r.tau1);
    let red = |base: Predictor, cand: Predictor| 1.0 - t2(cand) / t2(base);
    let xavier = red(Predictor::ErmRandom, Predictor::ErmXavier);
    let ensemble = red(Predictor::ErmRandom, Predictor::Ensemble);
    let pass = xavier >= MIN_REDUCTION && ensemble >= MIN_REDUCTION;
    report(
        8,
        pass,
        &format!(
            "tau2 reduction vs random-init ERM: xavier {:.1}%, ensemble {:.1}% (need >= {:.0}%; targets 49% / 56%); \
             tau1/tau2 xavier {:.3}/{:.3}, random {:.3}/{:.3}, ensemble {:.3}/{:.3}; ensemble vs xavier {:.1}%; {:.0?}",
            100.0 * xavier,
            100.0 * ensemble,
            100.0 * MIN_REDUCTION,
            t1(Predictor::ErmXavier),
            t2(Predictor::ErmXavier),
            t1(Predictor::ErmRandom),
            t2(Predictor::ErmRandom),
            t1(Predictor::Ensemble),
            t2(Predictor::Ensemble),
            100.0 * red(Predictor::ErmXavier, Predictor::Ensemble),
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_09_se_ordering() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::reference();
    cfg.trials = SE_SEEDS;
    cfg.dispersion_fits = 1;
    cfg.jobs = 0;
    let records = run_sweep(&cfg).unwrap();
    let mut pass = true;
    let mut rows = Vec::new();
    for &snr in &cfg.snr_grid_db {
        let se = |p: Predictor| mean(&per_seed(&records, p, snr, |r| r.se));
        let (ens, xav, omp, perfect) = (
            se(Predictor::Ensemble),
            se(Predictor::ErmXavier),
            se(Predictor::Omp),
            se(Predictor::PerfectCsi),
        );
        let bounded = [Predictor::Ensemble, Predictor::ErmXavier, Predictor::ErmRandom, Predictor::Omp]
            .iter()
            .all(|&p| se(p) <= perfect);
        let ok = ens >= xav && xav >= omp && bounded;
        pass &= ok;
        rows.push(format!(
            "{snr} dB ens {ens:.2} xav {xav:.2} omp {omp:.2} perfect {perfect:.2}{}",
            if ok { "" } else { " (violated)" }
        ));
    }
    report(
        9,
        pass,
        &format!("mean SE over {SE_SEEDS} seeds: {}; {:.0?}", rows.join("; "), start.elapsed()),
    );
}

#[test]
fn criterion_10_sweep_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut cfg = ExperimentConfig::quick();
        cfg.output_path = dir.path().join(name);
        run_sweep_to_files(&cfg).unwrap();
        std::fs::read(&cfg.output_path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    let pass = a == b && !a.is_empty();
    report(10, pass, &format!("two sweeps with master_seed 2024 -> {} and {} bytes, identical = {}", a.len(), b.len(), a == b));
}
