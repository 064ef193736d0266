use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use beamtrack::experiment::{
    generate_to_files, read_csv, run_sweep_to_files, summarize, train_to_file, ExperimentConfig,
};
use beamtrack::tracking::Predictor;
use beamtrack::Error;

/// Beamspace channel tracking experiments.
#[derive(Parser, Debug)]
#[command(name = "beamtrack", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment file; defaults to the built-in preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset used when no config file is given: reference or quick.
    #[arg(long, global = true, default_value = "reference")]
    preset: String,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Predictor name: erm_xavier, erm_random, ensemble, omp or perfect_csi.
    #[arg(long, global = true)]
    predictor: Option<String>,
    /// Number of trials (channel realizations).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trajectories and tracked channels and write them as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one learned predictor on trial 0 and save the model as JSON.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the SNR grid for a single predictor.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full grid of predictors, trials and SNRs.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the summary of a results CSV.
    Summarize {
        /// Results CSV written by `sweep` or `evaluate`.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            other => other,
        })?,
        None => ExperimentConfig::preset(&c.preset)
            .ok_or_else(|| Error::Config(format!("unknown preset `{}`; expected reference or quick", c.preset)))?,
    };
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = c.trials {
        cfg.trials = trials;
    }
    if let Some(jobs) = c.jobs {
        cfg.jobs = jobs;
    }
    if let Some(out) = &c.out {
        cfg.output_path = out.clone();
    }
    if let Some(name) = &c.predictor {
        cfg.predictors = vec![name.parse::<Predictor>()?];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single_predictor(c: &Common, cfg: &ExperimentConfig, what: &str) -> Result<Predictor, Error> {
    match (&c.predictor, cfg.predictors.as_slice()) {
        (Some(_), [p]) | (None, [p]) => Ok(*p),
        _ => Err(Error::Config(format!(
            "{what} needs --predictor (one of: {})",
            Predictor::valid_names()
        ))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            let trials = common.trials.unwrap_or(1);
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("trajectories.csv"));
            let (traj, chan) = generate_to_files(&cfg, trials, &out)?;
            println!("wrote {} and {}", traj.display(), chan.display());
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let p = single_predictor(&common, &cfg, "train")?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from(format!("{p}.json")));
            train_to_file(&cfg, p, 0, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Evaluate { common } => {
            let cfg = load_config(&common)?;
            single_predictor(&common, &cfg, "evaluate")?;
            print!("{}", run_sweep_to_files(&cfg)?);
            println!("wrote {}", cfg.output_path.display());
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            print!("{}", run_sweep_to_files(&cfg)?);
            println!("wrote {}", cfg.output_path.display());
        }
        Command::Summarize { input, common } => {
            let summary = summarize(&read_csv(&input).map_err(|e| with_path(e, &input))?)?;
            match &common.out {
                Some(out) => {
                    std::fs::write(out, summary.to_string())?;
                    println!("wrote {}", out.display());
                }
                None => print!("{summary}"),
            }
        }
    }
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Schema(_) => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
