use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::records::{write_csv, ResultRecord, SCHEMA_VERSION};
use super::seeds::{channel_seed, model_seed, noise_seed};
use super::summary::{summarize, Summary};
use crate::channel::MotionFeatureState;
use crate::error::{Error, Result};
use crate::metrics::{tau1, tau2};
use crate::tracking::{
    evaluate_slots, forecast_tracked, observe_trial, simulate_trial, train_forecaster, Predictor, TrackedSlot,
};

struct Forecasts {
    predictor: Predictor,
    /// One forecast sequence per dispersion fit.
    fits: Vec<Vec<MotionFeatureState<f64>>>,
    train_seconds: f64,
}

/// All records of one trial, ordered by SNR, then predictor (config order),
/// then time step.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<ResultRecord>> {
    let scn = &cfg.scenario;
    let seed = channel_seed(cfg.master_seed, trial);
    let truth = simulate_trial::<f64, _>(scn, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let mut forecasts = Vec::new();
    for &p in cfg.predictors.iter().filter(|p| p.is_learned()) {
        let start = Instant::now();
        let fits = (0..cfg.dispersion_fits)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(model_seed(cfg.master_seed, p, trial, k));
                let (f, st) = train_forecaster(scn, p, &truth.dataset, &mut rng)?;
                forecast_tracked(&f, st, scn, &truth.dataset)
            })
            .collect::<Result<Vec<_>>>()?;
        forecasts.push(Forecasts {
            predictor: p,
            fits,
            train_seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("trial {trial}: trained {p}");
    }

    let mut out = Vec::new();
    for &snr in &cfg.snr_grid_db {
        let nseed = noise_seed(cfg.master_seed, trial, snr);
        let mut rng = ChaCha8Rng::seed_from_u64(nseed);
        let obs = observe_trial(scn, &truth, snr, &mut rng)?;
        // Beam-pilot noise: every learned predictor and fit replays the same
        // stream, separate from the compressive one.
        let beam_noise = || ChaCha8Rng::seed_from_u64(nseed ^ 0x9e37_79b9_7f4a_7c15);
        for &p in &cfg.predictors {
            let start = Instant::now();
            let learned = forecasts.iter().find(|f| f.predictor == p);
            let runs: Vec<Vec<TrackedSlot<f64>>> = match learned {
                Some(f) => f
                    .fits
                    .iter()
                    .map(|pred| evaluate_slots(scn, p, &truth, &obs, Some(pred), snr, &mut beam_noise()))
                    .collect::<Result<_>>()?,
                None => vec![evaluate_slots(scn, p, &truth, &obs, None, snr, &mut beam_noise())?],
            };
            let wall = if cfg.record_wall_time {
                start.elapsed().as_secs_f64() + learned.map_or(0.0, |f| f.train_seconds)
            } else {
                0.0
            };
            for (k, slot) in runs[0].iter().enumerate() {
                let (t1, t2) = if runs.len() >= 2 {
                    let est: Vec<_> = runs.iter().map(|r| r[k].estimate.0.clone()).collect();
                    (tau1(&est)?, tau2(&est)?)
                } else {
                    (0.0, 0.0)
                };
                let rec = ResultRecord {
                    schema_version: SCHEMA_VERSION,
                    scenario_id: cfg.scenario_id.clone(),
                    predictor: p.name().into(),
                    seed,
                    snr_db: snr,
                    time_step: slot.time_step,
                    nmse: slot.score.nmse,
                    rmse: slot.score.rmse,
                    tau1: t1,
                    tau2: t2,
                    se: slot.score.se,
                    wall_time: wall,
                };
                rec.check_finite()?;
                out.push(rec);
            }
        }
    }
    Ok(out)
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    let n = if jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        jobs
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))
}

/// Every trial of the grid, in trial order regardless of scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let pool = worker_pool(cfg.jobs)?;
    let per_trial: Vec<Result<Vec<ResultRecord>>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect());
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Path of the text summary written next to a results CSV.
pub fn summary_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.txt");
    csv.with_file_name(name)
}

/// Run the grid, write the CSV to `cfg.output_path` and a text summary
/// beside it.
pub fn run_sweep_to_files(cfg: &ExperimentConfig) -> Result<Summary> {
    let records = run_sweep(cfg)?;
    write_csv(&cfg.output_path, &records)?;
    let summary = summarize(&records)?;
    std::fs::write(summary_path(&cfg.output_path), summary.to_string())?;
    Ok(summary)
}

/// Mean spectral efficiency of one predictor at every grid SNR over the
/// configured trials.
pub fn se_curve(cfg: &ExperimentConfig, predictor: Predictor, snr_grid_db: &[f64]) -> Result<Vec<(f64, f64)>> {
    let cfg = ExperimentConfig {
        predictors: vec![predictor],
        snr_grid_db: snr_grid_db.to_vec(),
        dispersion_fits: 1,
        ..cfg.clone()
    };
    let records = run_sweep(&cfg)?;
    Ok(snr_grid_db
        .iter()
        .map(|&snr| {
            let v: Vec<f64> = records.iter().filter(|r| r.snr_db == snr).map(|r| r.se).collect();
            (snr, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::records::write_records;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::quick();
        cfg.trials = 2;
        cfg.scenario.samples = 300;
        cfg.scenario.tracked_steps = 3;
        cfg
    }

    #[test]
    fn grid_shape_and_pairing() {
        let cfg = tiny();
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 5 * 3);
        // Every predictor sees the same trial seeds.
        for p in Predictor::ALL {
            let mut seeds: Vec<u64> = rows.iter().filter(|r| r.predictor == p.name()).map(|r| r.seed).collect();
            seeds.dedup();
            assert_eq!(seeds.len(), 2);
        }
        assert!(rows.iter().filter(|r| r.predictor == "perfect_csi").all(|r| r.nmse == 0.0));
        assert!(rows.iter().all(|r| r.tau2 <= r.tau1 + 1e-12));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let mut cfg = tiny();
        cfg.predictors = vec![Predictor::ErmXavier, Predictor::Omp];
        let bytes = |jobs| {
            let mut c = cfg.clone();
            c.jobs = jobs;
            let mut buf = Vec::new();
            write_records(&mut buf, &run_sweep(&c).unwrap()).unwrap();
            buf
        };
        assert_eq!(bytes(1), bytes(3));
    }

    #[test]
    fn perfect_csi_curve_increases() {
        let cfg = tiny();
        let curve = se_curve(&cfg, Predictor::PerfectCsi, &[0.0, 15.0, 30.0]).unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 > w[0].1), "{curve:?}");
    }

    #[test]
    fn summary_file_sits_beside_csv() {
        assert_eq!(summary_path(Path::new("out/run.csv")), PathBuf::from("out/run.summary.txt"));
    }
}
