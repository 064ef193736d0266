use std::fmt;

use super::records::ResultRecord;
use crate::error::{Error, Result};
use crate::tracking::Predictor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { count: n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub predictor: String,
    pub snr_db: f64,
    pub nmse: Stats,
    pub rmse: Stats,
    pub tau1: Stats,
    pub tau2: Stats,
    pub se: Stats,
}

/// Relative dispersion reduction `1 - candidate / baseline`; `None` when the
/// baseline has zero dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub baseline: String,
    pub candidate: String,
    pub snr_db: f64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

/// Relative spectral-efficiency gain `se / se_omp - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeGain {
    pub predictor: String,
    pub snr_db: f64,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario_ids: Vec<String>,
    pub cells: Vec<Cell>,
    pub reductions: Vec<Reduction>,
    pub se_gains: Vec<SeGain>,
}

impl Summary {
    pub fn cell(&self, predictor: &str, snr_db: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.predictor == predictor && c.snr_db == snr_db)
    }

    pub fn predictors(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.predictor.as_str()) {
                v.push(&c.predictor);
            }
        }
        v
    }
}

fn rank(name: &str) -> usize {
    Predictor::ALL
        .iter()
        .position(|p| p.name() == name)
        .unwrap_or(Predictor::ALL.len())
}

const REDUCTION_PAIRS: [(&str, &str); 3] = [
    ("erm_random", "erm_xavier"),
    ("erm_random", "ensemble"),
    ("erm_xavier", "ensemble"),
];

fn ratio_drop(base: f64, cand: f64) -> Option<f64> {
    (base > 0.0).then(|| 1.0 - cand / base)
}

pub fn summarize(records: &[ResultRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Schema("no records to summarize".into()));
    }
    let mut scenario_ids: Vec<String> = records.iter().map(|r| r.scenario_id.clone()).collect();
    scenario_ids.sort();
    scenario_ids.dedup();

    let mut predictors: Vec<&str> = records.iter().map(|r| r.predictor.as_str()).collect();
    predictors.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.cmp(b)));
    predictors.dedup();
    let mut snrs: Vec<f64> = records.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let mut cells = Vec::new();
    for &p in &predictors {
        for &snr in &snrs {
            let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.predictor == p && r.snr_db == snr).collect();
            if rows.is_empty() {
                continue;
            }
            cells.push(Cell {
                predictor: p.to_string(),
                snr_db: snr,
                nmse: Stats::of(rows.iter().map(|r| r.nmse)),
                rmse: Stats::of(rows.iter().map(|r| r.rmse)),
                tau1: Stats::of(rows.iter().map(|r| r.tau1)),
                tau2: Stats::of(rows.iter().map(|r| r.tau2)),
                se: Stats::of(rows.iter().map(|r| r.se)),
            });
        }
    }
    let mut summary = Summary {
        scenario_ids,
        cells,
        reductions: Vec::new(),
        se_gains: Vec::new(),
    };
    for &snr in &snrs {
        for (base, cand) in REDUCTION_PAIRS {
            if let (Some(b), Some(c)) = (summary.cell(base, snr), summary.cell(cand, snr)) {
                let red = Reduction {
                    baseline: base.into(),
                    candidate: cand.into(),
                    snr_db: snr,
                    tau1: ratio_drop(b.tau1.mean, c.tau1.mean),
                    tau2: ratio_drop(b.tau2.mean, c.tau2.mean),
                };
                summary.reductions.push(red);
            }
        }
        if let Some(omp) = summary.cell("omp", snr) {
            let base = omp.se.mean;
            let gains: Vec<SeGain> = summary
                .cells
                .iter()
                .filter(|c| c.snr_db == snr && c.predictor != "omp")
                .map(|c| SeGain {
                    predictor: c.predictor.clone(),
                    snr_db: snr,
                    gain: (base > 0.0).then(|| c.se.mean / base - 1.0),
                })
                .collect();
            summary.se_gains.extend(gains);
        }
    }
    Ok(summary)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario_ids.join(", "))?;
        writeln!(
            f,
            "{:<12} {:>7} {:>23} {:>23} {:>11} {:>11} {:>6}",
            "predictor", "snr_db", "nmse (mean ± std)", "se (mean ± std)", "tau1", "tau2", "n"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<12} {:>7} {:>10.4e} ± {:>10.3e} {:>10.4} ± {:>10.4} {:>11.4e} {:>11.4e} {:>6}",
                c.predictor, c.snr_db, c.nmse.mean, c.nmse.std, c.se.mean, c.se.std, c.tau1.mean, c.tau2.mean, c.nmse.count
            )?;
        }
        if !self.reductions.is_empty() {
            writeln!(f, "\ndispersion reduction (tau1 / tau2):")?;
            for r in &self.reductions {
                writeln!(
                    f,
                    "  {} vs {} at {} dB: {} / {}",
                    r.candidate,
                    r.baseline,
                    r.snr_db,
                    pct(r.tau1),
                    pct(r.tau2)
                )?;
            }
        }
        if !self.se_gains.is_empty() {
            writeln!(f, "\nspectral efficiency gain over omp:")?;
            for g in &self.se_gains {
                writeln!(f, "  {} at {} dB: {}", g.predictor, g.snr_db, pct(g.gain))?;
            }
        }
        Ok(())
    }
}
