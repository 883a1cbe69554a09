//! Random walks with spread-out and rescaled step laws: trajectory
//! sampling with the stopping times used in the half-space and box
//! estimates, Green functions, gambler's ruin, the Ornstein coupling, box
//! exit times and Harnack-type exit-distribution ratios.
//!
//! Positions are kept in `i64` internally, so long walks cannot overflow the
//! compact [`Point`] coordinates; they are converted back on output.

pub mod coupling;
pub mod exit;
pub mod green;
pub mod rescaled;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::rng::RngStream;

pub use coupling::{calibrate_coupling_time, ornstein_coupling, ornstein_endpoints, step_tv, CouplingOptions};
pub use exit::{
    exit_time_bound, exit_time_box, exit_time_box_dp, harnack_ratio, harnack_starts, BoundaryWeight, HarnackReport,
    HarnackRow,
};
pub use green::{
    exit_probability_finite, first_coordinate_marginal, gamblers_ruin, gamblers_ruin_exact, halfspace_green, DpWindow,
    GreenMethod,
};
pub use rescaled::{rescaled_step, RescaledMethod};

/// Monte Carlo parameters for walk estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwOptions {
    pub n: usize,
    pub stream: RngStream,
    /// Step budget per trajectory.
    pub horizon: u64,
}

impl RwOptions {
    pub fn new(n: usize, seed: u64, horizon: u64) -> Self {
        RwOptions { n, stream: RngStream::new(seed), horizon }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::usage("number of trajectories must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::usage("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Lattice position with wide coordinates.
pub type Pos = [i64; MAX_DIM];

pub(crate) fn pos_of(p: &Point) -> Pos {
    let mut a = [0i64; MAX_DIM];
    for (i, &c) in p.coords().iter().enumerate() {
        a[i] = c as i64;
    }
    a
}

pub(crate) fn point_of(p: &Pos, d: usize) -> Result<Point> {
    Point::new(&p[..d])
}

#[inline]
pub(crate) fn linf(p: &Pos, d: usize) -> i64 {
    p[..d].iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Which family a step law belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepKind {
    /// `J(0, ·)`: uniform on `Λ_L*`.
    UniformSpread { range: i64 },
    /// The rescaled law `μ_{m,L,β}`.
    Rescaled { m: i64, range: i64, beta: f64 },
    /// An explicitly tabulated law.
    Tabulated,
}

/// A step distribution on `Z^d`.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    kind: StepKind,
    dim: usize,
    support: Vec<(Point, f64)>,
    index: FxHashMap<u128, usize>,
    alias: Option<WeightedAliasIndex<f64>>,
}

impl StepDistribution {
    /// `J(0, ·)` for the spread-out walk of range `L`.
    pub fn uniform_spread(d: usize, range: i64) -> Result<Self> {
        let m = crate::lattice::SpreadOutModel::new(d, range, 0.0)?;
        let c = m.c_l();
        let support = m.offsets()?.into_iter().map(|p| (p, c)).collect();
        Self::build(StepKind::UniformSpread { range }, d, support, false)
    }

    /// A law given by its masses, which must be nonnegative and sum to one
    /// within `1e-9`. Zero masses are dropped.
    pub fn tabulated(d: usize, masses: Vec<(Point, f64)>) -> Result<Self> {
        Self::build(StepKind::Tabulated, d, masses, true)
    }

    pub(crate) fn build(kind: StepKind, d: usize, masses: Vec<(Point, f64)>, alias: bool) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::usage(format!("dimension must lie in 1..={MAX_DIM}")));
        }
        let mut support = Vec::with_capacity(masses.len());
        let mut index = FxHashMap::default();
        for (p, w) in masses {
            if p.dim() != d {
                return Err(Error::usage("step dimension mismatch"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::usage(format!("invalid step mass {w} at {p}")));
            }
            if w == 0.0 {
                continue;
            }
            if index.insert(p.key(), support.len()).is_some() {
                return Err(Error::usage(format!("duplicate step {p}")));
            }
            support.push((p, w));
        }
        let total = crate::stats::kahan_sum(support.iter().map(|s| s.1));
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::usage(format!("step masses sum to {total}, not 1")));
        }
        let alias = if alias {
            Some(
                WeightedAliasIndex::new(support.iter().map(|s| s.1).collect())
                    .map_err(|e| Error::Internal(format!("alias table: {e}")))?,
            )
        } else {
            None
        };
        Ok(StepDistribution { kind, dim: d, support, index, alias })
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    /// Mass of the step `v`.
    pub fn mass(&self, v: &Point) -> f64 {
        self.index.get(&v.key()).map_or(0.0, |&i| self.support[i].1)
    }

    /// Mass of the step `v` given as a wide position.
    #[inline]
    pub fn mass_pos(&self, v: &Pos) -> f64 {
        match self.kind {
            StepKind::UniformSpread { range } => {
                let r = linf(v, self.dim);
                if r >= 1 && r <= range {
                    self.support[0].1
                } else {
                    0.0
                }
            }
            _ => {
                if linf(v, self.dim) > i16::MAX as i64 {
                    return 0.0;
                }
                point_of(v, self.dim).map_or(0.0, |p| self.mass(&p))
            }
        }
    }

    /// Largest `|v|∞` in the support.
    pub fn max_range(&self) -> i64 {
        self.support.iter().map(|s| s.0.linf()).max().unwrap_or(0)
    }

    /// Draws one step.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Pos) {
        match (&self.kind, &self.alias) {
            (StepKind::UniformSpread { range }, _) => loop {
                let mut nz = false;
                for c in out.iter_mut().take(self.dim) {
                    *c = rng.random_range(-range..=*range);
                    nz |= *c != 0;
                }
                if nz {
                    return;
                }
            },
            (_, Some(a)) => {
                let p = &self.support[a.sample(rng)].0;
                for (i, &c) in p.coords().iter().enumerate() {
                    out[i] = c as i64;
                }
            }
            _ => unreachable!("tabulated laws carry an alias table"),
        }
    }

    /// `σ² = E|X_1|_2²`, by direct summation over the support.
    pub fn sigma_sq(&self) -> f64 {
        crate::stats::kahan_sum(self.support.iter().map(|(p, w)| p.l2_sq() as f64 * w))
    }

    /// Whether the law is invariant under coordinate permutations and
    /// reflections, to within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let mut by_class: FxHashMap<u128, (f64, f64, usize)> = FxHashMap::default();
        for (p, w) in &self.support {
            let e = by_class.entry(p.canonical().key()).or_insert((f64::INFINITY, 0.0, 0));
            e.0 = e.0.min(*w);
            e.1 = e.1.max(*w);
            e.2 += 1;
        }
        self.support.iter().all(|(p, _)| {
            let e = by_class[&p.canonical().key()];
            e.1 - e.0 <= tol && e.2 as u64 == p.orbit_size()
        })
    }

    /// Membership in the class `P_m`: symmetric, and supported on
    /// `Λ_{2m} \ Λ_{m-1}`.
    pub fn in_class(&self, m: i64, tol: f64) -> bool {
        m >= 1 && self.support.iter().all(|(p, _)| p.linf() >= m && p.linf() <= 2 * m) && self.is_symmetric(tol)
    }
}

/// Uniform law on the annulus `Λ_{2m} \ Λ_{m-1}`, a member of `P_m`.
pub fn annulus_step(d: usize, m: i64) -> Result<StepDistribution> {
    shell_law(d, m, 2 * m)
}

/// Uniform law on `{x : |x|∞ = m}`, a member of `P_m`.
pub fn sphere_step(d: usize, m: i64) -> Result<StepDistribution> {
    shell_law(d, m, m)
}

/// Uniform law on `{±m e_i}`, the member of `P_m` with `σ² = m²`.
pub fn axis_step(d: usize, m: i64) -> Result<StepDistribution> {
    if m < 1 {
        return Err(Error::usage("m must be at least 1"));
    }
    let w = 1.0 / (2 * d) as f64;
    let mut v = Vec::new();
    for i in 0..d {
        for s in [-m, m] {
            v.push((Point::axis(d, i, s), w));
        }
    }
    StepDistribution::tabulated(d, v)
}

fn shell_law(d: usize, lo: i64, hi: i64) -> Result<StepDistribution> {
    if lo < 1 {
        return Err(Error::usage("m must be at least 1"));
    }
    let pts: Vec<Point> = crate::percolation::graph::box_sites(d, hi).into_iter().filter(|p| p.linf() >= lo).collect();
    let w = 1.0 / pts.len() as f64;
    StepDistribution::tabulated(d, pts.into_iter().map(|p| (p, w)).collect())
}

/// Stopping rules. Exits from half-spaces and level hits count from index 1
/// (`inf{k >= 1: …}`); box exits and site hits count from index 0, so a walk
/// started outside the box (or at the target) stops at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StoppingSpec {
    /// `τ_n = inf{k >= 1 : X_k ∉ H_n}`.
    ExitHalfSpace(i64),
    /// `τ_n = inf{k >= 0 : X_k ∉ Λ_n}`.
    ExitBox(i64),
    /// `σ_x = inf{k >= 0 : X_k = x}`.
    Hit(Point),
    /// `τ̃_k = inf{k' >= 1 : (X_{k'})_1 >= k}`.
    HitLevel(i64),
}

impl StoppingSpec {
    #[inline]
    fn stops(&self, x: &Pos, d: usize, index: u64) -> bool {
        match self {
            StoppingSpec::ExitHalfSpace(n) => index >= 1 && x[0] < -n,
            StoppingSpec::ExitBox(n) => linf(x, d) > *n,
            StoppingSpec::Hit(t) => t.coords().iter().enumerate().all(|(i, &c)| x[i] == c as i64),
            StoppingSpec::HitLevel(k) => index >= 1 && x[0] >= *k,
        }
    }
}

/// Outcome of one simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSummary {
    pub stopped: bool,
    /// Stopping index, or the horizon if the walk did not stop.
    pub index: u64,
    pub final_point: Pos,
    /// Visits at indices before the stopping index (when requested).
    pub occupation: Option<FxHashMap<Pos, u32>>,
}

/// Simulates a walk from `start` until `stop` or `horizon` steps.
pub fn walk_sample<R: Rng + ?Sized>(
    step: &StepDistribution,
    start: &Point,
    stop: &StoppingSpec,
    horizon: u64,
    occupation: bool,
    rng: &mut R,
) -> Result<WalkSummary> {
    if horizon == 0 {
        return Err(Error::usage("horizon must be at least 1"));
    }
    let d = step.dim();
    if start.dim() != d {
        return Err(Error::usage("start dimension does not match the step law"));
    }
    let mut x = pos_of(start);
    let mut occ = occupation.then(FxHashMap::default);
    let mut dx = [0i64; MAX_DIM];
    let mut k = 0u64;
    loop {
        if stop.stops(&x, d, k) {
            return Ok(WalkSummary { stopped: true, index: k, final_point: x, occupation: occ });
        }
        if k == horizon {
            return Ok(WalkSummary { stopped: false, index: k, final_point: x, occupation: occ });
        }
        if let Some(o) = occ.as_mut() {
            *o.entry(x).or_insert(0) += 1;
        }
        step.sample(rng, &mut dx);
        for i in 0..d {
            x[i] += dx[i];
        }
        k += 1;
    }
}
