//! Box exit times and Harnack-type comparisons of exit distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::randwalk::{linf, pos_of, walk_sample, Pos, RwOptions, StepDistribution, StepKind, StoppingSpec};
use crate::rng::par_samples;
use crate::stats::Estimate;

/// Largest state space handled by the dense exit-time solve.
pub const MAX_DP_STATES: usize = 5_000;

/// The exit-time bound `9d (n/m)²` for members of the class `P_m`.
pub fn exit_time_bound(d: usize, n: i64, m: i64) -> f64 {
    9.0 * d as f64 * (n as f64 / m as f64).powi(2)
}

fn check_box(step: &StepDistribution, start: &Point, n: i64) -> Result<()> {
    if start.dim() != step.dim() {
        return Err(Error::usage("start dimension does not match the step law"));
    }
    if n < 1 {
        return Err(Error::usage("box radius must be at least 1"));
    }
    if let StepKind::Rescaled { m, .. } = step.kind() {
        if n < *m {
            return Err(Error::usage(format!("box radius {n} is below the step scale m = {m}")));
        }
    }
    Ok(())
}

/// Monte Carlo `E_u[τ_n]` with `τ_n = inf{k >= 0 : X_k ∉ Λ_n}`; a start
/// outside the box gives 0. Trajectories still inside at the horizon
/// contribute the horizon and are reported in the truncation field.
pub fn exit_time_box(step: &StepDistribution, start: &Point, n: i64, opts: RwOptions) -> Result<Estimate> {
    check_box(step, start, n)?;
    opts.check()?;
    if start.linf() > n {
        return Ok(Estimate::exact(0.0));
    }
    let stop = StoppingSpec::ExitBox(n);
    let rows = par_samples(opts.n, opts.stream, |_, rng| {
        walk_sample(step, start, &stop, opts.horizon, false, rng).map(|w| (w.index as f64, !w.stopped))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let unfinished = rows.iter().filter(|r| r.1).count();
    let v: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let e = Estimate::from_samples(&v);
    Ok(if unfinished > 0 {
        e.with_truncation(format!("{unfinished} trajectories reached horizon {}", opts.horizon))
    } else {
        e
    })
}

/// Exact `E_u[τ_n]` from the linear system `(I - P) h = 1` on `Λ_n`.
pub fn exit_time_box_dp(step: &StepDistribution, start: &Point, n: i64) -> Result<f64> {
    check_box(step, start, n)?;
    if start.linf() > n {
        return Ok(0.0);
    }
    let d = step.dim();
    let side = (2 * n + 1) as usize;
    let states = side
        .checked_pow(d as u32)
        .filter(|&s| s <= MAX_DP_STATES)
        .ok_or_else(|| Error::capacity(format!("box of radius {n} in d = {d} exceeds {MAX_DP_STATES} states")))?;
    let index = |x: &Pos| -> Option<usize> {
        let mut i = 0usize;
        for &c in x[..d].iter().rev() {
            if c.abs() > n {
                return None;
            }
            i = i * side + (c + n) as usize;
        }
        Some(i)
    };
    let mut a = nalgebra::DMatrix::<f64>::identity(states, states);
    let mut x = [0i64; MAX_DIM];
    for s in 0..states {
        let mut r = s;
        for c in x.iter_mut().take(d) {
            *c = (r % side) as i64 - n;
            r /= side;
        }
        for (v, w) in step.support() {
            let mut y = x;
            for (i, &c) in v.coords().iter().enumerate() {
                y[i] += c as i64;
            }
            if let Some(j) = index(&y) {
                a[(s, j)] -= w;
            }
        }
    }
    let b = nalgebra::DVector::from_element(states, 1.0);
    let h = a.lu().solve(&b).ok_or_else(|| Error::Internal("singular exit-time system".into()))?;
    Ok(h[index(&pos_of(start)).expect("start lies in the box")])
}

/// Boundary weight `f` evaluated at the exit point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryWeight {
    Constant,
    /// `1{± x_axis > R}`: exit through one face of `Λ_R`.
    Face {
        axis: usize,
        positive: bool,
    },
    /// `1{|x - center|∞ <= radius}`.
    Patch {
        center: Point,
        radius: i64,
    },
}

impl BoundaryWeight {
    fn eval(&self, x: &Pos, r: i64) -> f64 {
        let hit = match self {
            BoundaryWeight::Constant => true,
            BoundaryWeight::Face { axis, positive } => {
                if *positive {
                    x[*axis] > r
                } else {
                    x[*axis] < -r
                }
            }
            BoundaryWeight::Patch { center, radius } => {
                center.coords().iter().enumerate().all(|(i, &c)| (x[i] - c as i64).abs() <= *radius)
            }
        };
        hit as u8 as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnackRow {
    pub weight: BoundaryWeight,
    /// `E_u[f(X_τ)]` for each start `u`.
    pub values: Vec<(Point, Estimate)>,
    /// `max_u E_u[f] / min_v E_v[f]`, with a delta-method standard error.
    pub ratio: Estimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnackReport {
    pub n: i64,
    pub alpha: f64,
    /// Radius `⌊(1 + α) n⌋` of the exit box.
    pub radius: i64,
    pub rows: Vec<HarnackRow>,
}

/// Start grid in `Λ_n`: the origin, `±(n/2) e_1`, `n e_1`, and the corner
/// `(n/2, …, n/2)`.
pub fn harnack_starts(d: usize, n: i64) -> Vec<Point> {
    let h = n / 2;
    let mut v = vec![Point::origin(d), Point::axis(d, 0, h), Point::axis(d, 0, -h), Point::axis(d, 0, n)];
    v.push(Point::new(&vec![h; d]).expect("grid point fits"));
    v.dedup();
    v
}

/// Compares `E_u[f(X_τ)]` across starts `u ∈ Λ_n`, where
/// `τ = inf{k >= 0 : X_k ∉ Λ_{⌊(1+α)n⌋}}`. All weights are evaluated on the
/// same exit points.
pub fn harnack_ratio(
    step: &StepDistribution,
    n: i64,
    alpha: f64,
    weights: &[BoundaryWeight],
    starts: &[Point],
    opts: RwOptions,
) -> Result<HarnackReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::usage("alpha must be positive"));
    }
    opts.check()?;
    let d = step.dim();
    let radius = ((1.0 + alpha) * n as f64).floor() as i64;
    for u in starts {
        check_box(step, u, n)?;
        if u.linf() > n {
            return Err(Error::usage(format!("start {u} lies outside the box of radius {n}")));
        }
    }
    if starts.is_empty() || weights.is_empty() {
        return Err(Error::usage("need at least one start and one weight"));
    }
    if radius > i16::MAX as i64 / 2 {
        return Err(Error::capacity("exit box too large"));
    }
    let stop = StoppingSpec::ExitBox(radius);
    let mut per_start = Vec::new();
    for (i, u) in starts.iter().enumerate() {
        let exits = par_samples(opts.n, opts.stream.child(i as u64), |_, rng| {
            walk_sample(step, u, &stop, opts.horizon, false, rng).map(|w| (w.final_point, w.stopped))
        });
        let exits = exits.into_iter().collect::<Result<Vec<_>>>()?;
        if exits.iter().any(|e| !e.1) {
            return Err(Error::capacity(format!(
                "a walk from {u} did not exit within {} steps; raise the horizon",
                opts.horizon
            )));
        }
        debug_assert!(exits.iter().all(|e| linf(&e.0, d) > radius));
        per_start.push(exits);
    }
    let rows = weights
        .iter()
        .map(|f| {
            let values: Vec<(Point, Estimate)> = starts
                .iter()
                .zip(&per_start)
                .map(|(u, ex)| {
                    let v: Vec<f64> = ex.iter().map(|e| f.eval(&e.0, radius)).collect();
                    (*u, Estimate::from_samples(&v))
                })
                .collect();
            let hi = values.iter().max_by(|a, b| a.1.value.total_cmp(&b.1.value)).unwrap();
            let lo = values.iter().min_by(|a, b| a.1.value.total_cmp(&b.1.value)).unwrap();
            let r = hi.1.value / lo.1.value;
            let se = if lo.1.value > 0.0 {
                r * ((hi.1.std_error / hi.1.value).powi(2) + (lo.1.std_error / lo.1.value).powi(2)).sqrt()
            } else {
                f64::INFINITY
            };
            let ratio = Estimate { value: r, std_error: se, n_samples: opts.n, truncation: None, censored_rate: 0.0 };
            HarnackRow { weight: f.clone(), values, ratio }
        })
        .collect();
    Ok(HarnackReport { n, alpha, radius, rows })
}
