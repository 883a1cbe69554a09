//! Finite-grid checks of the half-space conditions
//! `ψ_β(H_n) < C/L` (the ℓ¹ condition) and
//! `P_β[0 ↔^H x] < (C/L^d) (L / (L ∨ |x_1|))^{d-1}` (the ℓ∞ condition).
//!
//! A report certifies the conditions on the tested grid only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::profile::halfspace_profile;
use crate::estimators::McOptions;
use crate::lattice::{Point, SpreadOutModel};
use crate::stats::Estimate;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapOptions {
    /// The constant `C > 1`.
    pub c: f64,
    /// ψ is tested for `n = 0..=n_max`.
    pub n_max: u32,
    /// Points of `H* = H \ {0}` for the pointwise condition.
    pub x_grid: Vec<Point>,
    pub mc: McOptions,
}

impl BootstrapOptions {
    /// Default grid: the axis points `(k, 0, …)` and the diagonal-ish points
    /// `(k, k, 0, …)` for `k = 0..=k_max`, minus the origin.
    pub fn default_grid(d: usize, k_max: i64) -> Vec<Point> {
        let mut out = Vec::new();
        for k in 0..=k_max {
            for t in 0..=1.min(d as i64 - 1) {
                for j in [0, 1, k.max(1)] {
                    let mut c = vec![0i64; d];
                    c[0] = k;
                    if t == 1 {
                        c[1] = j;
                    }
                    let p = Point::new(&c).expect("grid point fits");
                    if !p.is_origin() && !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// One tested quantity against its bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub value: Estimate,
    pub bound: f64,
    /// `1 - value / bound`; positive when the condition holds.
    pub margin: f64,
    /// The 2-SE interval contains the bound.
    pub ambiguous: bool,
}

impl BoundCheck {
    fn new(value: Estimate, bound: f64) -> Self {
        let margin = 1.0 - value.value / bound;
        let ambiguous = (value.value - bound).abs() <= 2.0 * value.std_error;
        BoundCheck { value, bound, margin, ambiguous }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub c: f64,
    pub range: i64,
    pub beta: f64,
    pub ell1_holds: bool,
    /// `(n, check)` with the smallest margin.
    pub ell1_worst: (u32, BoundCheck),
    pub ellinf_holds: bool,
    /// `(x, check)` with the smallest margin.
    pub ellinf_worst: Option<(Point, BoundCheck)>,
    pub ell1: Vec<(u32, BoundCheck)>,
    pub ellinf: Vec<(Point, BoundCheck)>,
    /// Some check had its interval straddle the bound.
    pub ambiguous: bool,
}

pub fn bootstrap_check(model: &SpreadOutModel, opts: &BootstrapOptions) -> Result<BootstrapReport> {
    if !(opts.c > 1.0 && opts.c.is_finite()) {
        return Err(Error::usage(format!("the constant C must exceed 1, got {}", opts.c)));
    }
    for x in &opts.x_grid {
        if x.dim() != model.dim() || x.get(0) < 0 || x.is_origin() {
            return Err(Error::usage(format!("grid point {x} is not in H*")));
        }
    }
    let d = model.dim() as i32;
    let l = model.range();
    let lf = l as f64;
    let prof = halfspace_profile(model, opts.n_max, &[], &opts.x_grid, opts.mc)?;
    let ell1: Vec<(u32, BoundCheck)> =
        prof.psi.iter().enumerate().map(|(n, e)| (n as u32, BoundCheck::new(e.clone(), opts.c / lf))).collect();
    let ellinf: Vec<(Point, BoundCheck)> = prof
        .points
        .iter()
        .map(|(x, e)| {
            let scale = lf / (l.max(x.get(0).abs()) as f64);
            (*x, BoundCheck::new(e.clone(), opts.c / lf.powi(d) * scale.powi(d - 1)))
        })
        .collect();
    let worst = |v: &[(u32, BoundCheck)]| {
        v.iter().min_by(|a, b| a.1.margin.total_cmp(&b.1.margin)).cloned().expect("n_max >= 0 gives one entry")
    };
    let ellinf_worst = ellinf.iter().min_by(|a, b| a.1.margin.total_cmp(&b.1.margin)).cloned();
    Ok(BootstrapReport {
        c: opts.c,
        range: l,
        beta: model.beta(),
        ell1_holds: ell1.iter().all(|(_, c)| c.margin > 0.0),
        ell1_worst: worst(&ell1),
        ellinf_holds: ellinf.iter().all(|(_, c)| c.margin > 0.0),
        ellinf_worst,
        ambiguous: ell1.iter().any(|(_, c)| c.ambiguous) || ellinf.iter().any(|(_, c)| c.ambiguous),
        ell1,
        ellinf,
    })
}
