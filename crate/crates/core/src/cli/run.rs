//! The subcommands as library functions, so that tests and other front ends
//! can drive them without a process boundary.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cli::config::{EstimatorKind, ExperimentConfig};
use crate::cli::output::{
    create_table, read_rows, write_json_atomic, FitSummary, Manifest, PointRunner, Row, CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::estimators::bootstrap::{bootstrap_check, BootstrapOptions, BootstrapReport};
use crate::estimators::profile::{box_profile, sharp_length, SharpLength, SharpValue};
use crate::estimators::{operational_critical_point, triangle, CriticalSearch, McOptions, Method, TriangleOptions};
use crate::lattice::{Point, SpreadOutModel};
use crate::oracle::{
    run_sweep, verify_convolution, verify_instance, ConvolutionReport, InequalityReport, Instance, SweepConfig,
    SweepSummary,
};
use crate::randwalk::{
    annulus_step, exit_time_bound, exit_time_box, gamblers_ruin_exact, halfspace_green, ornstein_coupling,
    CouplingOptions, DpWindow, GreenMethod, RwOptions, StepDistribution,
};
use crate::rng::RngStream;
use crate::stats::{loglog_fit, Estimate};

/// Where a command wrote its results.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub manifest: Manifest,
}

fn model(cfg: &ExperimentConfig, beta: f64) -> Result<SpreadOutModel> {
    SpreadOutModel::new(cfg.d, cfg.l, beta)
}

/// Sweep points and the reference `β_c` (if any). Runs the critical-point
/// search when a gap sweep has no explicit `β_c`, unless a resumed manifest
/// already holds one.
fn resolve_points(cfg: &ExperimentConfig, runner: &mut PointRunner) -> Result<(Vec<f64>, Option<f64>)> {
    let Some(sw) = &cfg.sweep else {
        if cfg.betas.is_empty() {
            return Err(Error::usage("no β values: give --beta or a gap sweep"));
        }
        return Ok((cfg.betas.clone(), None));
    };
    let beta_c = match sw.beta_c {
        Some(b) => b,
        None => {
            if runner.manifest.critical.is_none() {
                let c = &cfg.critical;
                let mut search =
                    CriticalSearch::new(c.lo, c.hi, c.steps, c.n, RngStream::new(cfg.seed).named("critical").key());
                search.cap = c.cap;
                search.threshold = c.threshold;
                log::info!("searching the operational critical point in [{}, {}]", c.lo, c.hi);
                let cp = operational_critical_point(cfg.d, cfg.l, &search)?;
                let row = Row {
                    beta: cp.beta_hat,
                    estimator: "beta_c_hat".into(),
                    value: cp.beta_hat,
                    std_error: cp.step,
                    n: c.n,
                    truncation: format!(
                        "bracket [{}, {}] cap {} threshold {:e}",
                        cp.beta_below, cp.beta_hat, c.cap, c.threshold
                    ),
                    censored_rate: 0.0,
                };
                crate::cli::output::append_rows(&runner.paths.csv, &[row])?;
                runner.manifest.critical = Some(cp);
                runner.save()?;
            }
            runner.manifest.critical.as_ref().expect("critical point recorded").beta_hat
        }
    };
    let betas: Vec<f64> = sw.gaps()?.iter().map(|g| beta_c - g).collect();
    if betas.iter().any(|&b| b < 0.0) {
        return Err(Error::usage("a sweep gap exceeds β_c"));
    }
    Ok((betas, Some(beta_c)))
}

fn sharp_row(beta: f64, s: &SharpLength, censored_rate: f64) -> Row {
    let (value, mut note) = match s.value {
        SharpValue::Finite(k) => (k as f64, format!("epsilon={}", s.epsilon)),
        SharpValue::Unbounded(k) => (k as f64, format!("epsilon={}; unbounded: no crossing up to k={k}", s.epsilon)),
    };
    if s.ambiguous {
        note.push_str("; ambiguous");
    }
    Row {
        beta,
        estimator: "sharp_length".into(),
        value,
        std_error: 0.0,
        n: s.n_samples,
        truncation: note,
        censored_rate,
    }
}

fn triangle_rows(cfg: &ExperimentConfig, model: &SpreadOutModel, stream: RngStream) -> Result<Vec<Row>> {
    let t = &cfg.triangle;
    let opts = TriangleOptions {
        windows: t.windows.clone(),
        pairs: t.pairs,
        table: McOptions::new(t.table_samples, 0).with_cap(cfg.cap).with_stream(stream),
    };
    let rep = triangle(model, &opts)?;
    let beta = model.beta();
    let mut rows = Vec::new();
    for (r, e) in &rep.values {
        rows.push(Row { truncation: format!("window R={r}"), ..Row::from_estimate(beta, "triangle", e) });
    }
    for (j, e) in rep.increments.iter().enumerate() {
        let (a, b) = (t.windows[j], t.windows[j + 1]);
        rows.push(Row {
            truncation: format!("windows R={a}->{b}"),
            ..Row::from_estimate(beta, "triangle_increment", e)
        });
    }
    for (j, e) in rep.increment_ratios.iter().enumerate() {
        let w = &t.windows[j..j + 3];
        rows.push(Row {
            truncation: format!("windows R={}->{}->{}", w[0], w[1], w[2]),
            ..Row::from_estimate(beta, "triangle_increment_ratio", e)
        });
    }
    Ok(rows)
}

fn estimate_of(r: &Row) -> Estimate {
    Estimate {
        value: r.value,
        std_error: r.std_error,
        n_samples: r.n,
        truncation: (!r.truncation.is_empty()).then(|| r.truncation.clone()),
        censored_rate: r.censored_rate,
    }
}

/// Log-log fits of `χ` and `L_β` against `β_c - β`.
fn sweep_fits(rows: &[Row], beta_c: f64) -> Vec<FitSummary> {
    let mut out = Vec::new();
    for (name, predicted) in [("chi", -1.0), ("sharp_length", -0.5)] {
        let pts: Vec<&Row> = rows
            .iter()
            .filter(|r| r.estimator == name && r.beta < beta_c && !r.truncation.contains("unbounded"))
            .collect();
        let x: Vec<f64> = pts.iter().map(|r| beta_c - r.beta).collect();
        let y: Vec<Estimate> = pts.iter().map(|r| estimate_of(r)).collect();
        if let Ok(fit) = loglog_fit(&x, &y) {
            out.push(FitSummary { estimator: name.into(), against: "beta_c - beta".into(), fit, predicted });
        }
    }
    out
}

/// `χ`, `L_β(ε)` and `∇_R` over a β list or a gap sweep below `β_c`.
pub fn run_scan(cfg: &ExperimentConfig, resume: bool) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Error::usage("no estimators selected"));
    }
    let mut runner = PointRunner::open(&cfg.out_dir, "scan", cfg, &CSV_HEADER, resume)?;
    let (points, beta_c) = resolve_points(cfg, &mut runner)?;
    runner.set_points(points)?;
    let root = RngStream::new(cfg.seed).named("scan");
    let want = |k| cfg.estimators.contains(&k);
    runner.run(|i, beta| {
        log::info!("scan point {i}: beta = {beta}");
        let m = model(cfg, beta)?;
        let stream = root.child(i as u64);
        let mut rows = Vec::new();
        if want(EstimatorKind::Chi) || want(EstimatorKind::SharpLength) {
            let opts = McOptions::new(cfg.n, 0).with_cap(cfg.cap).with_stream(stream.named("profile"));
            let prof = box_profile(&m, cfg.k_max, true, opts)?;
            if want(EstimatorKind::Chi) {
                let chi = prof.chi.as_ref().ok_or_else(|| Error::Internal("full profile without χ".into()))?;
                rows.push(Row::from_estimate(beta, "chi", chi));
            }
            if want(EstimatorKind::SharpLength) {
                rows.push(sharp_row(beta, &SharpLength::from_profile(&prof, cfg.epsilon), prof.censored_rate));
            }
        }
        if want(EstimatorKind::Triangle) {
            rows.extend(triangle_rows(cfg, &m, stream.named("triangle"))?);
        }
        Ok(rows)
    })?;
    if let Some(bc) = beta_c {
        runner.manifest.fits = sweep_fits(&read_rows(&runner.paths.csv)?, bc);
        runner.manifest.notes.push(format!(
            "exponent fits against beta_c - beta with beta_c = {bc}; at fixed L = {} this is a universality-level check, \
             the mean-field statements are proved for L large",
            cfg.l
        ));
    }
    runner.finish()?;
    Ok(RunOutput { csv: runner.paths.csv.clone(), manifest: runner.manifest })
}

/// `∇_R` and its window increments at each β.
pub fn run_triangle(cfg: &ExperimentConfig, resume: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let mut runner = PointRunner::open(&cfg.out_dir, "triangle", cfg, &CSV_HEADER, resume)?;
    let (points, _) = resolve_points(cfg, &mut runner)?;
    runner.set_points(points)?;
    let root = RngStream::new(cfg.seed).named("triangle");
    runner.run(|i, beta| triangle_rows(cfg, &model(cfg, beta)?, root.child(i as u64)))?;
    runner.finish()?;
    Ok(RunOutput { csv: runner.paths.csv.clone(), manifest: runner.manifest })
}

/// `L_β(ε)` at each β with the adaptive Monte Carlo search.
pub fn run_sharp_length(cfg: &ExperimentConfig, resume: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let mut runner = PointRunner::open(&cfg.out_dir, "sharp-length", cfg, &CSV_HEADER, resume)?;
    let (points, _) = resolve_points(cfg, &mut runner)?;
    runner.set_points(points)?;
    let root = RngStream::new(cfg.seed).named("sharp-length");
    runner.run(|i, beta| {
        let opts = McOptions::new(cfg.n, 0).with_cap(cfg.cap).with_stream(root.child(i as u64));
        let s = sharp_length(&model(cfg, beta)?, cfg.epsilon, cfg.k_max, Method::MonteCarlo(opts))?;
        Ok(vec![sharp_row(beta, &s, 0.0)])
    })?;
    runner.finish()?;
    Ok(RunOutput { csv: runner.paths.csv.clone(), manifest: runner.manifest })
}

/// The bootstrap conditions `ψ_β(H_n) <= C/L` and the pointwise half-space
/// bound at each β. Full reports go to `bootstrap.json`.
pub fn run_bootstrap(cfg: &ExperimentConfig, resume: bool) -> Result<(RunOutput, Vec<BootstrapReport>)> {
    cfg.validate()?;
    let mut runner = PointRunner::open(&cfg.out_dir, "bootstrap", cfg, &CSV_HEADER, resume)?;
    let (points, _) = resolve_points(cfg, &mut runner)?;
    runner.set_points(points)?;
    let root = RngStream::new(cfg.seed).named("bootstrap");
    let b = &cfg.bootstrap;
    let mut reports = Vec::new();
    runner.run(|i, beta| {
        let opts = BootstrapOptions {
            c: b.c,
            n_max: b.n_max,
            x_grid: BootstrapOptions::default_grid(cfg.d, b.k_max),
            mc: McOptions::new(cfg.n, 0).with_cap(cfg.cap).with_stream(root.child(i as u64)),
        };
        let rep = bootstrap_check(&model(cfg, beta)?, &opts)?;
        let mut rows: Vec<Row> = rep
            .ell1
            .iter()
            .map(|(n, c)| Row {
                truncation: format!("n={n}; bound={}", c.bound),
                ..Row::from_estimate(beta, "psi", &c.value)
            })
            .collect();
        for (x, c) in &rep.ellinf {
            rows.push(Row {
                truncation: format!("x={x}; bound={}", c.bound),
                ..Row::from_estimate(beta, "halfspace_two_point", &c.value)
            });
        }
        for (name, holds) in [("ell1_holds", rep.ell1_holds), ("ellinf_holds", rep.ellinf_holds)] {
            rows.push(Row::from_estimate(beta, name, &Estimate::exact(holds as u8 as f64)));
        }
        reports.push(rep);
        Ok(rows)
    })?;
    write_json_atomic(&cfg.out_dir.join("bootstrap.json"), &reports)?;
    runner.finish()?;
    Ok((RunOutput { csv: runner.paths.csv.clone(), manifest: runner.manifest }, reports))
}

/// Everything `verify` checked.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerifyBundle {
    pub sweep: SweepSummary,
    pub convolution: Vec<ConvolutionReport>,
    /// `(file, reports)` for replayed instances.
    pub replay: Vec<(String, Vec<InequalityReport>)>,
}

impl VerifyBundle {
    pub fn failures(&self) -> usize {
        self.sweep.total_failures()
            + self.convolution.iter().filter(|c| !c.report.passed).count()
            + self.replay.iter().flat_map(|(_, r)| r).filter(|r| !r.passed).count()
    }
}

fn empty_sweep(s: &SweepConfig) -> bool {
    s.instances == 0 && s.adversarial == 0
}

/// The exact-inequality sweep, the convolution cases and any replay files.
/// Failing instances are written to `failures/` in the replay format.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyBundle> {
    let v = &cfg.verify;
    fs::create_dir_all(&cfg.out_dir)?;
    let sweep = if empty_sweep(&v.sweep) { SweepSummary::default() } else { run_sweep(&v.sweep)? };
    let convolution =
        v.convolution.iter().map(|c| verify_convolution(c.d, c.l, c.window, c.c)).collect::<Result<Vec<_>>>()?;
    let mut replay = Vec::new();
    for path in &v.replay {
        let inst = Instance::parse(&fs::read_to_string(path)?)?;
        replay.push((path.display().to_string(), verify_instance(&inst)?));
    }
    let bundle = VerifyBundle { sweep, convolution, replay };
    if !bundle.sweep.failures.is_empty() {
        let dir = cfg.out_dir.join("failures");
        fs::create_dir_all(&dir)?;
        for (k, (rep, text)) in bundle.sweep.failures.iter().enumerate() {
            let head = format!(
                "# failed {} ({}): lhs {:e} rhs {:e} slack {:e}\n",
                rep.check.name(),
                rep.instance,
                rep.lhs,
                rep.rhs,
                rep.slack
            );
            fs::write(dir.join(format!("failure-{k:04}.txt")), head + text)?;
        }
    }
    write_json_atomic(&cfg.out_dir.join("verify.json"), &bundle)?;
    Ok(bundle)
}

/// One line of the random-walk tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwRow {
    pub study: String,
    pub d: usize,
    pub l: i64,
    pub param: String,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub truncation: String,
}

pub const RW_HEADER: [&str; 8] = ["study", "d", "l", "param", "value", "std_error", "n", "truncation"];

impl RwRow {
    fn new(study: &str, d: usize, l: i64, param: String, e: &Estimate) -> Self {
        RwRow {
            study: study.into(),
            d,
            l,
            param,
            value: e.value,
            std_error: e.std_error,
            n: e.n_samples,
            truncation: e.truncation.clone().unwrap_or_default(),
        }
    }
}

/// The configured random-walk studies, written to `rw.csv`.
pub fn run_rw(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<RwRow>)> {
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("rw.csv");
    let root = RngStream::new(cfg.seed).named("rw");
    let mut rows = Vec::new();
    let rw = &cfg.rw;
    if let Some(c) = &rw.coupling {
        let opts = CouplingOptions { kappa: c.kappa, band_floor: c.band_floor };
        let mut k = 0u64;
        for &d in &c.dims {
            for &l in &c.ranges {
                let u = Point::axis(d, 0, c.separation * l);
                for &t in &c.times {
                    let seed = root.named("coupling").child(k).key();
                    k += 1;
                    let e = ornstein_coupling(d, l, &u, &Point::origin(d), t, c.n, seed, &opts)?;
                    rows.push(RwRow::new("coupling_mismatch", d, l, format!("T={t}"), &e));
                }
            }
        }
    }
    if let Some(g) = &rw.green {
        let step = StepDistribution::uniform_spread(g.d, g.l)?;
        let targets: Vec<Point> = g.axis.iter().map(|&x| Point::axis(g.d, 0, x)).collect();
        let vals = halfspace_green(&step, &targets, GreenMethod::Dp(DpWindow::default_for(g.d)))?;
        for (x, e) in g.axis.iter().zip(&vals) {
            rows.push(RwRow::new("halfspace_green", g.d, g.l, format!("x1={x}"), e));
        }
    }
    if let Some(r) = &rw.ruin {
        for &l in &r.ranges {
            let step = StepDistribution::uniform_spread(r.d, l)?;
            for &k in &r.ks {
                let p = gamblers_ruin_exact(&step, k)?;
                rows.push(RwRow::new("ruin", r.d, l, format!("k={k}"), &Estimate::exact(p)));
                rows.push(RwRow::new(
                    "ruin_scaled",
                    r.d,
                    l,
                    format!("k={k}"),
                    &Estimate::exact(k as f64 * p / l as f64),
                ));
            }
        }
    }
    if let Some(x) = &rw.exit {
        let mut k = 0u64;
        for &m in &x.ms {
            let step = annulus_step(x.d, m)?;
            for &n in &x.ns {
                let opts = RwOptions::new(x.n, root.named("exit").child(k).key(), x.horizon);
                k += 1;
                let e = exit_time_box(&step, &Point::origin(x.d), n, opts)?;
                rows.push(RwRow::new("exit_time", x.d, m, format!("m={m} n={n}"), &e));
                let bound = Estimate::exact(exit_time_bound(x.d, n, m));
                rows.push(RwRow::new("exit_time_bound", x.d, m, format!("m={m} n={n}"), &bound));
            }
        }
    }
    create_table(&path, &RW_HEADER)?;
    crate::cli::output::append_rows(&path, &rows)?;
    Ok((path, rows))
}
