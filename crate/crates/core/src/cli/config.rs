//! Experiment configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::profile::default_epsilon;
use crate::oracle::SweepConfig;
use crate::percolation::explore::DEFAULT_CAP;
use crate::stats::CENSOR_FLAG;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Mean cluster size `χ(β)`.
    Chi,
    /// `L_β(ε)` read off the box profile.
    SharpLength,
    /// Windowed triangle diagram `∇_R`.
    Triangle,
}

/// `β_i = β_c - gap_i` with gaps log-spaced from `gap_max` down to `gap_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSweep {
    /// Reference point; when absent the operational critical point is
    /// searched first (see [`CriticalConfig`]).
    pub beta_c: Option<f64>,
    pub gap_min: f64,
    pub gap_max: f64,
    pub points: usize,
}

impl Default for GapSweep {
    fn default() -> Self {
        GapSweep { beta_c: None, gap_min: 0.01, gap_max: 0.2, points: 12 }
    }
}

impl GapSweep {
    pub fn gaps(&self) -> Result<Vec<f64>> {
        if !(self.gap_min > 0.0 && self.gap_max >= self.gap_min && self.gap_max.is_finite()) {
            return Err(Error::usage("need 0 < gap_min <= gap_max"));
        }
        if self.points == 0 {
            return Err(Error::usage("a sweep needs at least one point"));
        }
        if self.points == 1 {
            return Ok(vec![self.gap_max]);
        }
        let r = (self.gap_min / self.gap_max).ln();
        Ok((0..self.points).map(|i| self.gap_max * (r * i as f64 / (self.points - 1) as f64).exp()).collect())
    }
}

/// Bisection for the operational critical point `β̂_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    pub lo: f64,
    pub hi: f64,
    pub steps: u32,
    pub n: usize,
    pub cap: usize,
    pub threshold: f64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig { lo: 0.98, hi: 1.02, steps: 8, n: 20_000, cap: DEFAULT_CAP, threshold: CENSOR_FLAG }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriangleConfig {
    pub windows: Vec<i64>,
    pub pairs: usize,
    pub table_samples: usize,
}

impl Default for TriangleConfig {
    fn default() -> Self {
        TriangleConfig { windows: vec![4, 8, 16], pairs: 2_000, table_samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub c: f64,
    pub n_max: u32,
    /// Extent of the default point grid.
    pub k_max: i64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { c: 2.0, n_max: 8, k_max: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionCase {
    pub d: usize,
    pub l: i64,
    pub window: i64,
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub sweep: SweepConfig,
    pub convolution: Vec<ConvolutionCase>,
    /// Instance files in the replay format, checked in addition.
    pub replay: Vec<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sweep: SweepConfig::default(),
            convolution: [(5, 1), (7, 1), (7, 2)]
                .iter()
                .map(|&(d, l)| ConvolutionCase { d, l, window: 16, c: 1.0 })
                .collect(),
            replay: Vec::new(),
        }
    }
}

/// Ornstein coupling table: one row per `(d, L, T)`, started from
/// `u = separation · L · e_1` and `v = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingStudy {
    pub dims: Vec<usize>,
    pub ranges: Vec<i64>,
    pub times: Vec<u64>,
    pub separation: i64,
    pub n: usize,
    pub kappa: f64,
    pub band_floor: bool,
}

impl Default for CouplingStudy {
    fn default() -> Self {
        CouplingStudy {
            dims: vec![1],
            ranges: vec![4, 16, 64],
            times: vec![256, 1024, 4096],
            separation: 1,
            n: 2_000,
            kappa: 0.125,
            band_floor: false,
        }
    }
}

/// Half-space Green function by dynamic programming along the first axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenStudy {
    pub d: usize,
    pub l: i64,
    pub axis: Vec<i64>,
}

impl Default for GreenStudy {
    fn default() -> Self {
        GreenStudy { d: 3, l: 1, axis: vec![1, 2, 4, 8, 16, 32] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuinStudy {
    pub d: usize,
    pub ranges: Vec<i64>,
    pub ks: Vec<i64>,
}

impl Default for RuinStudy {
    fn default() -> Self {
        RuinStudy { d: 2, ranges: vec![1, 4], ks: vec![8, 16, 32, 64] }
    }
}

/// Exit times of `Λ_n` for the annulus law of `𝒫_m`, against `9d(n/m)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitStudy {
    pub d: usize,
    pub ms: Vec<i64>,
    pub ns: Vec<i64>,
    pub n: usize,
    pub horizon: u64,
}

impl Default for ExitStudy {
    fn default() -> Self {
        ExitStudy { d: 2, ms: vec![1, 2, 4], ns: vec![8, 16, 32], n: 2_000, horizon: 1 << 20 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RwConfig {
    pub coupling: Option<CouplingStudy>,
    pub green: Option<GreenStudy>,
    pub ruin: Option<RuinStudy>,
    pub exit: Option<ExitStudy>,
}

impl RwConfig {
    /// Every study with its defaults.
    pub fn all() -> Self {
        RwConfig {
            coupling: Some(CouplingStudy::default()),
            green: Some(GreenStudy::default()),
            ruin: Some(RuinStudy::default()),
            exit: Some(ExitStudy::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub l: i64,
    /// Explicit β values; ignored when `sweep` is set.
    pub betas: Vec<f64>,
    pub sweep: Option<GapSweep>,
    pub critical: CriticalConfig,
    pub estimators: Vec<EstimatorKind>,
    /// Clusters per β.
    pub n: usize,
    pub cap: usize,
    /// Box-profile depth used for `L_β(ε)`.
    pub k_max: u32,
    pub epsilon: f64,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub triangle: TriangleConfig,
    pub bootstrap: BootstrapConfig,
    pub verify: VerifyConfig,
    pub rw: RwConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 7,
            l: 1,
            betas: Vec::new(),
            sweep: None,
            critical: CriticalConfig::default(),
            estimators: vec![EstimatorKind::Chi, EstimatorKind::SharpLength],
            n: 10_000,
            cap: DEFAULT_CAP,
            k_max: 64,
            epsilon: default_epsilon(),
            seed: 1,
            workers: None,
            out_dir: PathBuf::from("percolab-out"),
            triangle: TriangleConfig::default(),
            bootstrap: BootstrapConfig::default(),
            verify: VerifyConfig::default(),
            rw: RwConfig::all(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::lattice::MAX_DIM).contains(&self.d) {
            return Err(Error::usage(format!("dimension must lie in 1..={}", crate::lattice::MAX_DIM)));
        }
        if self.l < 1 {
            return Err(Error::usage("range L must be at least 1"));
        }
        if self.n == 0 || self.cap == 0 {
            return Err(Error::usage("n and cap must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::usage("epsilon must lie in (0, 1)"));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::usage("β values must be finite and nonnegative"));
        }
        if self.workers == Some(0) {
            return Err(Error::usage("workers must be positive"));
        }
        Ok(())
    }

    /// The part of the configuration that determines results: output
    /// location and worker count are cleared.
    pub fn result_relevant(&self) -> Self {
        ExperimentConfig { workers: None, out_dir: PathBuf::new(), ..self.clone() }
    }
}
