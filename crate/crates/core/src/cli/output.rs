//! Result tables and the run manifest.
//!
//! Rows of one sweep point are appended to the CSV in a single write and
//! the manifest is then replaced atomically (write to a temporary file,
//! rename), so an interrupted run leaves a consistent prefix that
//! [`PointRunner`] resumes from.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cli::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimators::CriticalPoint;
use crate::stats::{Estimate, LineFit};

/// One line of a result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub beta: f64,
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub truncation: String,
    pub censored_rate: f64,
}

impl Row {
    pub fn from_estimate(beta: f64, estimator: impl Into<String>, e: &Estimate) -> Self {
        Row {
            beta,
            estimator: estimator.into(),
            value: e.value,
            std_error: e.std_error,
            n: e.n_samples,
            truncation: e.truncation.clone().unwrap_or_default(),
            censored_rate: e.censored_rate,
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["beta", "estimator", "value", "std_error", "n", "truncation", "censored_rate"];

/// Serializes rows without a header.
fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Creates (or truncates) a CSV file holding only `header`.
pub fn create_table(path: &Path, header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Appends rows in one write and syncs the file.
pub fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let bytes = csv_bytes(rows)?;
    let mut f = OpenOptions::new().append(true).open(path)?;
    f.write_all(&bytes)?;
    f.sync_data()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A log-log exponent fit emitted with a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub estimator: String,
    /// Abscissa of the fit, e.g. `beta_c - beta`.
    pub against: String,
    pub fit: LineFit,
    /// Mean-field prediction for the slope.
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Result-relevant configuration echo.
    pub config: ExperimentConfig,
    pub critical: Option<CriticalPoint>,
    /// β of every sweep point, in order.
    pub points: Vec<f64>,
    /// Number of points whose rows are in the table.
    pub completed: usize,
    pub finished: bool,
    /// Accumulated over resumed sessions.
    pub wall_time_secs: f64,
    pub fits: Vec<FitSummary>,
    pub notes: Vec<String>,
}

/// Output files of one command inside the output directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunPaths { csv: dir.join(format!("{command}.csv")), manifest: dir.join(format!("{command}.manifest.json")) })
    }
}

/// Drives a list of sweep points with persistence and resume.
pub struct PointRunner {
    pub paths: RunPaths,
    pub manifest: Manifest,
    started: Instant,
    base_time: f64,
}

impl PointRunner {
    /// Opens a run. With `resume`, an existing manifest for the same
    /// command and configuration is continued; otherwise the table is
    /// started afresh.
    pub fn open(dir: &Path, command: &str, cfg: &ExperimentConfig, header: &[&str], resume: bool) -> Result<Self> {
        let paths = RunPaths::new(dir, command)?;
        let echo = cfg.result_relevant();
        if resume && paths.manifest.exists() && paths.csv.exists() {
            let m: Manifest = serde_json::from_slice(&fs::read(&paths.manifest)?)?;
            if m.command != command || m.config != echo {
                return Err(Error::usage(format!(
                    "{} belongs to a different configuration; rerun without --resume",
                    paths.manifest.display()
                )));
            }
            log::info!("resuming {command} after {} completed points", m.completed);
            let base_time = m.wall_time_secs;
            return Ok(PointRunner { paths, manifest: m, started: Instant::now(), base_time });
        }
        create_table(&paths.csv, header)?;
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: echo,
            critical: None,
            points: Vec::new(),
            completed: 0,
            finished: false,
            wall_time_secs: 0.0,
            fits: Vec::new(),
            notes: Vec::new(),
        };
        let r = PointRunner { paths, manifest, started: Instant::now(), base_time: 0.0 };
        r.save()?;
        Ok(r)
    }

    pub fn save(&self) -> Result<()> {
        let mut m = self.manifest.clone();
        m.wall_time_secs = self.base_time + self.started.elapsed().as_secs_f64();
        write_json_atomic(&self.paths.manifest, &m)
    }

    /// Fixes the point list; on resume it must match the recorded one.
    pub fn set_points(&mut self, points: Vec<f64>) -> Result<()> {
        if self.manifest.completed > 0 && self.manifest.points != points {
            return Err(Error::Internal("resumed sweep points differ from the recorded ones".into()));
        }
        self.manifest.points = points;
        self.save()
    }

    /// Runs every point not yet completed, appending its rows.
    pub fn run<T: Serialize>(&mut self, mut point: impl FnMut(usize, f64) -> Result<Vec<T>>) -> Result<()> {
        let points = self.manifest.points.clone();
        for (i, &beta) in points.iter().enumerate().skip(self.manifest.completed) {
            let rows = point(i, beta)?;
            append_rows(&self.paths.csv, &rows)?;
            self.manifest.completed = i + 1;
            self.save()?;
        }
        Ok(())
    }

    pub fn finish(&mut self) -> Result<()> {
        self.manifest.finished = true;
        self.save()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(beta: f64) -> Row {
        Row::from_estimate(beta, "chi", &Estimate::exact(1.5).with_truncation("window R=4"))
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        create_table(&p, &CSV_HEADER).unwrap();
        append_rows(&p, &[row(0.1), row(0.2)]).unwrap();
        append_rows(&p, &[row(0.3)]).unwrap();
        let back = read_rows(&p).unwrap();
        assert_eq!(back, vec![row(0.1), row(0.2), row(0.3)]);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("beta,estimator,value,std_error,n,truncation,censored_rate\n"));
    }

    #[test]
    fn runner_resumes_after_interruption() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let pts = vec![0.1, 0.2, 0.3];
        let mut r = PointRunner::open(dir.path(), "scan", &cfg, &CSV_HEADER, false).unwrap();
        r.set_points(pts.clone()).unwrap();
        let err = r.run(|i, b| if i == 2 { Err(Error::capacity("stop")) } else { Ok(vec![row(b)]) });
        assert!(err.is_err());
        let mut r = PointRunner::open(dir.path(), "scan", &cfg, &CSV_HEADER, true).unwrap();
        assert_eq!(r.manifest.completed, 2);
        r.set_points(pts).unwrap();
        let mut seen = Vec::new();
        r.run(|i, b| {
            seen.push(i);
            Ok(vec![row(b)])
        })
        .unwrap();
        assert_eq!(seen, vec![2]);
        assert_eq!(read_rows(&r.paths.csv).unwrap(), vec![row(0.1), row(0.2), row(0.3)]);
    }

    #[test]
    fn resume_rejects_a_different_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        PointRunner::open(dir.path(), "scan", &cfg, &CSV_HEADER, false).unwrap();
        let other = ExperimentConfig { n: 7, ..cfg };
        assert!(matches!(PointRunner::open(dir.path(), "scan", &other, &CSV_HEADER, true), Err(Error::Usage(_))));
    }
}
