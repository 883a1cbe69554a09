//! Command-line front end: `scan`, `verify`, `rw`, `triangle`, `bootstrap`
//! and `sharp-length`.
//!
//! Settings come from built-in defaults, then the `--config` TOML file, then
//! flags. Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 resource or capacity error.

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{EstimatorKind, ExperimentConfig, GapSweep};
pub use output::{Manifest, Row};
pub use run::{run_bootstrap, run_rw, run_scan, run_sharp_length, run_triangle, run_verify, RunOutput, VerifyBundle};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "percolab", version, about = "Spread-out Bernoulli percolation laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// χ, L_β and ∇ over a β list or a gap sweep below β_c.
    Scan(Common),
    /// Exact inequality sweep, convolution estimate and replay files.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random instances in the sweep.
        #[arg(long)]
        instances: Option<usize>,
        /// Adversarial long-edge instances in the sweep.
        #[arg(long)]
        adversarial: Option<usize>,
        /// Instance files to check in addition.
        #[arg(long = "replay")]
        replay: Vec<PathBuf>,
    },
    /// Random-walk study tables (coupling, Green function, ruin, exit times).
    Rw(Common),
    /// Windowed triangle diagram at each β.
    Triangle(Common),
    /// Bootstrap conditions at each β.
    Bootstrap(Common),
    /// Sharp length L_β(ε) at each β.
    SharpLength(Common),
    /// Print the effective configuration as TOML.
    Config(Common),
}

/// Flags shared by all subcommands; each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dimension d.
    #[arg(long)]
    pub d: Option<usize>,
    /// Range L of the kernel.
    #[arg(short = 'L', long = "range")]
    pub l: Option<i64>,
    /// β values (repeat or separate with commas).
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    /// Sweep β_c - gap with log-spaced gaps below this β_c.
    #[arg(long)]
    pub beta_c: Option<f64>,
    /// Sweep below a searched operational critical point.
    #[arg(long, conflicts_with = "beta_c")]
    pub search_critical: bool,
    /// Smallest gap β_c - β of the sweep.
    #[arg(long)]
    pub gap_min: Option<f64>,
    /// Largest gap β_c - β of the sweep.
    #[arg(long)]
    pub gap_max: Option<f64>,
    /// Number of sweep points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Estimators to run.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<EstimatorKind>,
    /// Clusters (or samples) per point.
    #[arg(short, long)]
    pub n: Option<usize>,
    /// Site cap per exploration.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Largest box radius k of the profile.
    #[arg(long)]
    pub k_max: Option<u32>,
    /// ε of the sharp length (threshold 1 - ε).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Triangle windows.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<i64>,
    /// Root seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long, env = "PERCOLAB_WORKERS")]
    pub workers: Option<usize>,
    /// Continue an interrupted run from its manifest.
    #[arg(long)]
    pub resume: bool,
}

impl Common {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out {
            c.out_dir = v.clone();
        }
        if let Some(v) = self.d {
            c.d = v;
        }
        if let Some(v) = self.l {
            c.l = v;
        }
        if !self.beta.is_empty() {
            c.betas = self.beta.clone();
            c.sweep = None;
        }
        if self.beta_c.is_some()
            || self.search_critical
            || self.gap_min.is_some()
            || self.gap_max.is_some()
            || self.points.is_some()
        {
            let mut s = c.sweep.take().unwrap_or_default();
            if self.beta_c.is_some() {
                s.beta_c = self.beta_c;
            }
            if self.search_critical {
                s.beta_c = None;
            }
            s.gap_min = self.gap_min.unwrap_or(s.gap_min);
            s.gap_max = self.gap_max.unwrap_or(s.gap_max);
            s.points = self.points.unwrap_or(s.points);
            c.sweep = Some(s);
        }
        if !self.estimators.is_empty() {
            c.estimators = self.estimators.clone();
        }
        c.n = self.n.unwrap_or(c.n);
        c.cap = self.cap.unwrap_or(c.cap);
        c.k_max = self.k_max.unwrap_or(c.k_max);
        c.epsilon = self.epsilon.unwrap_or(c.epsilon);
        if !self.windows.is_empty() {
            c.triangle.windows = self.windows.clone();
        }
        c.seed = self.seed.unwrap_or(c.seed);
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        c.validate()?;
        Ok(c)
    }
}

fn set_workers(cfg: &ExperimentConfig) {
    if let Some(w) = cfg.workers {
        if rayon::ThreadPoolBuilder::new().num_threads(w).build_global().is_err() {
            log::warn!("worker pool already initialized; --workers ignored");
        }
    }
}

fn print_run(out: &RunOutput) {
    println!("wrote {} ({} points)", out.csv.display(), out.manifest.completed);
    if let Some(c) = &out.manifest.critical {
        println!("operational beta_c = {} (bracket step {:.2e})", c.beta_hat, c.step);
    }
    for f in &out.manifest.fits {
        println!(
            "fit {} vs {}: slope {:.3} ± {:.3} (mean-field {})",
            f.estimator, f.against, f.fit.slope, f.fit.slope_se, f.predicted
        );
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Scan(c) => {
            let cfg = c.resolve()?;
            set_workers(&cfg);
            print_run(&run_scan(&cfg, c.resume)?);
        }
        Command::Triangle(c) => {
            let cfg = c.resolve()?;
            set_workers(&cfg);
            print_run(&run_triangle(&cfg, c.resume)?);
        }
        Command::SharpLength(c) => {
            let cfg = c.resolve()?;
            set_workers(&cfg);
            print_run(&run_sharp_length(&cfg, c.resume)?);
        }
        Command::Bootstrap(c) => {
            let cfg = c.resolve()?;
            set_workers(&cfg);
            let (out, reps) = run_bootstrap(&cfg, c.resume)?;
            print_run(&out);
            for r in &reps {
                println!("beta {}: l1 condition {}, l-infinity condition {}", r.beta, r.ell1_holds, r.ellinf_holds);
            }
        }
        Command::Rw(c) => {
            let cfg = c.resolve()?;
            set_workers(&cfg);
            let (path, rows) = run_rw(&cfg)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::Verify { common, instances, adversarial, replay } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = instances {
                cfg.verify.sweep.instances = n;
            }
            if let Some(n) = adversarial {
                cfg.verify.sweep.adversarial = n;
            }
            cfg.verify.replay.extend(replay);
            set_workers(&cfg);
            let b = run_verify(&cfg)?;
            for (name, t) in &b.sweep.tallies {
                println!("{name}: {}/{} passed, min slack {:.3e}", t.passed, t.total, t.min_slack);
            }
            for c in &b.convolution {
                println!(
                    "convolution d={} L={} R={}: A {:.4} -> {:.4} ({})",
                    c.d,
                    c.l,
                    c.window,
                    c.a_window,
                    c.a_doubled,
                    if c.report.passed { "stable" } else { "UNSTABLE" }
                );
            }
            for (file, reps) in &b.replay {
                println!("{file}: {}/{} passed", reps.iter().filter(|r| r.passed).count(), reps.len());
            }
            let fails = b.failures();
            println!("{} failures; bundle in {}", fails, cfg.out_dir.join("verify.json").display());
            if fails > 0 {
                return Ok(1);
            }
        }
        Command::Config(c) => print!("{}", c.resolve()?.to_toml()),
    }
    Ok(0)
}

/// Parses `args` and runs; maps errors to exit codes and reports them on
/// standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common(args: &[&str]) -> Common {
        let mut v = vec!["percolab", "scan"];
        v.extend_from_slice(args);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Scan(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "d = 3\nn = 50\nbetas = [0.2]\n").unwrap();
        let c = common(&["--config", p.to_str().unwrap(), "-n", "70", "--beta", "0.1,0.3"]).resolve().unwrap();
        assert_eq!((c.d, c.n), (3, 70));
        assert_eq!(c.betas, vec![0.1, 0.3]);
    }

    #[test]
    fn sweep_flags_build_a_gap_sweep() {
        let c = common(&["--beta-c", "1.0", "--points", "3"]).resolve().unwrap();
        let s = c.sweep.unwrap();
        assert_eq!((s.beta_c, s.points), (Some(1.0), 3));
        let c = common(&["--search-critical"]).resolve().unwrap();
        assert_eq!(c.sweep.unwrap().beta_c, None);
    }

    #[test]
    fn bad_usage_exits_with_two() {
        assert_eq!(main_with_args(["percolab", "scan", "--d", "0", "--beta", "0.1"]), 2);
        assert_eq!(main_with_args(["percolab", "frobnicate"]), 2);
        assert_eq!(main_with_args(["percolab", "--help"]), 0);
    }
}
