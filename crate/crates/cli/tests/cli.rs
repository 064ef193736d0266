use std::path::Path;
use std::process::{Command, Output};

fn beamtrack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamtrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "scenario_id = \"small\"\n\
trials = 2\n\
snr_grid_db = [0.0, 20.0]\n\
dispersion_fits = 2\n\
[scenario]\n\
samples = 250\n\
tracked_steps = 3\n\
[scenario.geometry]\n\
n_tx = 16\n\
n_rx = 8\n\
element_spacing_over_wavelength = 0.5\n\
[scenario.clusters]\n\
n_clusters = 2\n\
n_rays = 2\n\
[scenario.erm]\n\
reservoir_size = 30\n\
washout = 10\n\
[scenario.ensemble]\n\
m1 = 2\n\
[scenario.rf]\n\
n_tx_rf = 2\n\
n_rx_rf = 2\n\
n_streams = 2\n";

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for name in ["a.csv", "b.csv"] {
        let o = beamtrack(&["sweep", "--config", &cfg, "--out", name, "--seed", "7"], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("schema_version,scenario_id,predictor,seed,snr_db,time_step,nmse,rmse,tau1,tau2,se,wall_time\n"));
    // 5 predictors x 2 trials x 2 SNRs x 3 steps.
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 2 * 3);
    assert!(dir.path().join("a.summary.txt").exists());

    let o = beamtrack(&["sweep", "--config", &cfg, "--out", "c.csv", "--seed", "8"], dir.path());
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(dir.path().join("c.csv")).unwrap(), b);
}

#[test]
fn evaluate_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = beamtrack(
        &["evaluate", "--config", &cfg, "--predictor", "ensemble", "--trials", "1", "--out", "ens.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("ens.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("ensemble")));

    let o = beamtrack(&["summarize", "ens.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ensemble"));

    let o = beamtrack(&["summarize", "ens.csv", "--out", "ens.txt"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(dir.path().join("ens.txt")).unwrap().contains("ensemble"));

    // Evaluate needs exactly one predictor.
    let o = beamtrack(&["evaluate", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--predictor"));
}

#[test]
fn generate_and_train_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = beamtrack(&["generate", "--config", &cfg, "--out", "gen/run.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let traj = std::fs::read_to_string(dir.path().join("gen/run.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 250 * 4);
    assert!(dir.path().join("gen/run.channels.csv").exists());

    let o = beamtrack(&["train", "--config", &cfg, "--predictor", "erm_xavier", "--out", "m.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = std::fs::read_to_string(dir.path().join("m.json")).unwrap();
    assert!(model.contains("\"w_out\""));

    let o = beamtrack(&["train", "--config", &cfg, "--predictor", "omp", "--out", "m.json"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "trails = 3\n").unwrap();
    let o = beamtrack(&["sweep", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trails"), "{}", stderr(&o));

    let cfg = small_config(dir.path());
    let o = beamtrack(&["evaluate", "--config", &cfg, "--predictor", "lstm"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("erm_xavier"), "{}", stderr(&o));

    let o = beamtrack(&["sweep", "--preset", "huge"], dir.path());
    assert_eq!(code(&o), 2);

    let o = beamtrack(&["sweep", "--config", &cfg, "--trials", "0"], dir.path());
    assert_eq!(code(&o), 2);

    std::fs::write(dir.path().join("bad.csv"), "schema_version,scenario,predictor\n").unwrap();
    let o = beamtrack(&["summarize", "bad.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("scenario_id"), "{}", stderr(&o));

    // Unknown flags are usage errors.
    let o = beamtrack(&["sweep", "--bogus"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamtrack(&["summarize", "missing.csv"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));

    let o = beamtrack(&["sweep", "--config", "missing.toml"], dir.path());
    assert_eq!(code(&o), 3);

    // Output under a regular file cannot be created.
    std::fs::write(dir.path().join("blocker"), "x").unwrap();
    let cfg = small_config(dir.path());
    let o = beamtrack(&["sweep", "--config", &cfg, "--out", "blocker/out.csv"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
