//! CSV result records. Column order is frozen per schema version.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 12] = [
    "schema_version",
    "scenario_id",
    "predictor",
    "seed",
    "snr_db",
    "time_step",
    "nmse",
    "rmse",
    "tau1",
    "tau2",
    "se",
    "wall_time",
];

/// One (predictor, trial seed, SNR, time step) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub scenario_id: String,
    pub predictor: String,
    pub seed: u64,
    pub snr_db: f64,
    pub time_step: u64,
    pub nmse: f64,
    pub rmse: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub se: f64,
    pub wall_time: f64,
}

impl ResultRecord {
    fn numeric_fields(&self) -> [(&'static str, f64); 7] {
        [
            ("snr_db", self.snr_db),
            ("nmse", self.nmse),
            ("rmse", self.rmse),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("se", self.se),
            ("wall_time", self.wall_time),
        ]
    }

    /// Error naming the first non-finite field.
    pub fn check_finite(&self) -> Result<()> {
        match self.numeric_fields().into_iter().find(|(_, v)| !v.is_finite()) {
            None => Ok(()),
            Some((name, v)) => Err(Error::NonFinite(format!(
                "{name} = {v} for predictor {} seed {} snr {} dB step {}",
                self.predictor, self.seed, self.snr_db, self.time_step
            ))),
        }
    }
}

pub fn write_records<W: Write>(sink: W, records: &[ResultRecord]) -> Result<()> {
    for r in records {
        r.check_finite()?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write to `path`, creating parent directories.
pub fn write_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_records(BufWriter::new(File::create(path)?), records)
}

pub fn read_records<R: Read>(source: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("file is empty; expected a header row".into()));
    }
    for (i, want) in COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Schema(format!("column {} is `{got}`, expected `{want}`", i + 1)));
            }
            None => return Err(Error::Schema(format!("missing column `{want}`"))),
        }
    }
    if let Some(extra) = header.get(COLUMNS.len()) {
        return Err(Error::Schema(format!("unexpected column `{extra}`")));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<ResultRecord>().enumerate() {
        let rec = row.map_err(|e| Error::Schema(format!("row {}: {e}", line + 2)))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "row {}: schema_version {} (expected {SCHEMA_VERSION})",
                line + 2,
                rec.schema_version
            )));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    read_records(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(predictor: &str, tau2: f64) -> ResultRecord {
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            scenario_id: "t".into(),
            predictor: predictor.into(),
            seed: 7,
            snr_db: 15.0,
            time_step: 3,
            nmse: 0.1,
            rmse: 1.5,
            tau1: 0.0,
            tau2,
            se: 4.0,
            wall_time: 0.0,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![rec("omp", 0.0), rec("ensemble", 0.25)];
        let mut buf = Vec::new();
        write_records(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&COLUMNS.join(",")));
        assert_eq!(read_records(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn non_finite_values_fail() {
        let mut r = rec("omp", 0.0);
        r.se = f64::NAN;
        let err = write_records(Vec::new(), &[r]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.starts_with("se")));
    }

    #[test]
    fn schema_errors_name_the_column() {
        let bad = "schema_version,scenario_id,predictor,seed,snr,time_step,nmse,rmse,tau1,tau2,se,wall_time\n";
        let err = read_records(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("`snr`") && err.contains("snr_db"), "{err}");
        let short = "schema_version,scenario_id\n";
        assert!(read_records(short.as_bytes()).unwrap_err().to_string().contains("predictor"));
        assert!(matches!(read_records("".as_bytes()), Err(Error::Schema(_))));
        let header_only = format!("{}\n", COLUMNS.join(","));
        assert!(matches!(read_records(header_only.as_bytes()), Err(Error::Schema(_))));
    }
}
