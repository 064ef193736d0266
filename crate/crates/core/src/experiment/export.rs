//! Trajectory and channel dumps, and stand-alone model training.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::seeds::{channel_seed, model_seed};
use crate::error::{Error, Result};
use crate::tracking::{simulate_trial, train_forecaster, Forecaster, Predictor};

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["trial", "seed", "time_step", "path", "aoa", "aod"];
pub const CHANNEL_COLUMNS: [&str; 7] = ["trial", "seed", "time_step", "rx_beam", "tx_beam", "re", "im"];

/// `run.csv` -> `run.channels.csv`
pub fn channels_path(trajectory_csv: &Path) -> PathBuf {
    let mut name = trajectory_csv.file_stem().unwrap_or_default().to_os_string();
    name.push(".channels.csv");
    trajectory_csv.with_file_name(name)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?)))
}

/// Simulate trials `0..trials` and write the full angle trajectories to
/// `path` and the beamspace channels of the tracked slots next to it.
/// Returns both paths.
pub fn generate_to_files(cfg: &ExperimentConfig, trials: usize, path: &Path) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let chan_path = channels_path(path);
    let mut traj = csv_writer(path)?;
    let mut chan = csv_writer(&chan_path)?;
    traj.write_record(TRAJECTORY_COLUMNS)?;
    chan.write_record(CHANNEL_COLUMNS)?;
    for trial in 0..trials {
        let seed = channel_seed(cfg.master_seed, trial);
        let truth = simulate_trial::<f64, _>(&cfg.scenario, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let (t, s) = (trial.to_string(), seed.to_string());
        for st in &truth.trajectory {
            let step = st.timestamp.to_string();
            for (p, (aoa, aod)) in st.aoa.iter().zip(&st.aod).enumerate() {
                traj.write_record([&t, &s, &step, &p.to_string(), &aoa.to_string(), &aod.to_string()])?;
            }
        }
        for (st, h) in truth.states.iter().zip(&truth.channels) {
            let step = st.timestamp.to_string();
            for j in 0..h.0.ncols() {
                for i in 0..h.0.nrows() {
                    let v = h.0[(i, j)];
                    chan.write_record([
                        &t,
                        &s,
                        &step,
                        &i.to_string(),
                        &j.to_string(),
                        &v.re.to_string(),
                        &v.im.to_string(),
                    ])?;
                }
            }
        }
    }
    traj.flush()?;
    chan.flush()?;
    Ok((path.to_path_buf(), chan_path))
}

/// Train `predictor` on the training windows of `trial` with the seed the
/// sweep would use for its first fit, and save the model as JSON.
pub fn train_to_file(cfg: &ExperimentConfig, predictor: Predictor, trial: usize, path: &Path) -> Result<()> {
    cfg.validate()?;
    if !predictor.is_learned() {
        return Err(Error::Config(format!(
            "predictor `{predictor}` has nothing to train; choose one of erm_xavier, erm_random, ensemble"
        )));
    }
    let seed = channel_seed(cfg.master_seed, trial);
    let truth = simulate_trial::<f64, _>(&cfg.scenario, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed(cfg.master_seed, predictor, trial, 0));
    let (forecaster, _) = train_forecaster(&cfg.scenario, predictor, &truth.dataset, &mut rng)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match forecaster {
        Forecaster::Single(m) => m.save_json(path),
        Forecaster::Ensemble(m) => m.save_json(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleModel;
    use crate::reservoir::ReservoirModel;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::quick();
        cfg.scenario.samples = 200;
        cfg.scenario.tracked_steps = 2;
        cfg
    }

    #[test]
    fn generate_writes_both_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.csv");
        let (a, b) = generate_to_files(&tiny(), 2, &path).unwrap();
        assert_eq!(b, dir.path().join("gen.channels.csv"));
        let traj = std::fs::read_to_string(a).unwrap();
        let chan = std::fs::read_to_string(b).unwrap();
        assert!(traj.starts_with("trial,seed,time_step,path,aoa,aod\n"));
        // 2 trials x 200 samples x 4 paths, plus the header.
        assert_eq!(traj.lines().count(), 1 + 2 * 200 * 4);
        // 2 trials x 2 slots x (8 x 16) cells.
        assert_eq!(chan.lines().count(), 1 + 2 * 2 * 128);
    }

    #[test]
    fn trained_models_reload() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let p = dir.path().join("erm.json");
        train_to_file(&cfg, Predictor::ErmXavier, 0, &p).unwrap();
        assert!(ReservoirModel::<f64>::load_json(&p).unwrap().is_trained());
        let p = dir.path().join("ens.json");
        train_to_file(&cfg, Predictor::Ensemble, 0, &p).unwrap();
        assert_eq!(EnsembleModel::<f64>::load_json(&p).unwrap().m1(), cfg.scenario.ensemble.m1);
        let err = train_to_file(&cfg, Predictor::Omp, 0, &p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
