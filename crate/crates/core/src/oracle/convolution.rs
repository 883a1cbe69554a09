//! The convolution estimate: if
//! `f(x) <= 1{x=0} + (C/L^d) (L/(L∨|x|))^{d-2}` then
//! `(f*f)(x) <= A (1{x=0} + 1{x≠0} L^{-4} (L∨|x|)^{-(d-4)})` with `A`
//! independent of `L`.
//!
//! The extremal `f` saturates the hypothesis on `Λ_R` and vanishes outside.
//! Since `f - δ_0` depends on `|x|∞` only and is nonincreasing in it, it is a
//! positive combination of box indicators `Σ_r c_r 1_{Λ_r}`, and
//! `1_{Λ_r} * 1_{Λ_s}(x)` factorizes into one-dimensional interval overlaps.
//! This makes each `(f*f)(x)` cost `O(R² d)` instead of `O(R^d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Check, InequalityReport};
use crate::stats::{kahan_sum, weighted_line_fit, LineFit};

/// Largest window accepted (the doubled window included).
pub const MAX_WINDOW: i64 = 512;

/// Allowed relative drift of the fitted constant under `R -> 2R`.
pub const STABILITY_TOL: f64 = 0.2;

/// Right-hand side of the hypothesis without the delta term.
fn profile(d: usize, l: i64, c: f64, r: i64) -> f64 {
    let l = l as f64;
    c / l.powi(d as i32) * (l / l.max(r as f64)).powi(d as i32 - 2)
}

/// `f(x)` for the extremal `f` on `Λ_R`.
pub fn extremal_f(d: usize, l: i64, c: f64, window: i64, x: &[i64]) -> f64 {
    let r = x.iter().map(|v| v.abs()).max().unwrap_or(0);
    if r > window {
        return 0.0;
    }
    (r == 0) as u8 as f64 + profile(d, l, c, r)
}

/// The conclusion's shape `1{x=0} + 1{x≠0} L^{-4} (L∨|x|)^{-(d-4)}`.
pub fn convolution_bound(d: usize, l: i64, x: &[i64]) -> f64 {
    let r = x.iter().map(|v| v.abs()).max().unwrap_or(0);
    if r == 0 {
        return 1.0;
    }
    let l = l as f64;
    l.powi(-4) * l.max(r as f64).powi(-(d as i32 - 4))
}

/// `|[-r, r] ∩ [x - s, x + s]|`.
fn overlap(r: i64, s: i64, x: i64) -> f64 {
    (r.min(x + s) - (-r).max(x - s) + 1).max(0) as f64
}

/// `(f*f)(x)` for the extremal `f` on `Λ_R` via the box decomposition.
pub fn self_convolution(d: usize, l: i64, c: f64, window: i64, x: &[i64]) -> f64 {
    let coef: Vec<f64> =
        (0..=window).map(|r| profile(d, l, c, r) - if r < window { profile(d, l, c, r + 1) } else { 0.0 }).collect();
    let fx = |y: &[i64]| extremal_f(d, l, c, window, y);
    let neg: Vec<i64> = x.iter().map(|v| -v).collect();
    // f = δ + g: f*f = δ*δ + 2 (g*δ) + g*g, with g*δ(x) = g(x) = f(x) - δ(x).
    let delta = x.iter().all(|&v| v == 0) as u8 as f64;
    let g_x = fx(x) - delta;
    let g_neg = fx(&neg) - delta;
    let gg = kahan_sum((0..=window).flat_map(|r| {
        let coef = &coef;
        (0..=window)
            .map(move |s| coef[r as usize] * coef[s as usize] * x.iter().map(|&xi| overlap(r, s, xi)).product::<f64>())
    }));
    delta + g_x + g_neg + gg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub d: usize,
    pub l: i64,
    pub window: i64,
    pub c: f64,
    /// Smallest `A` making the conclusion hold on the rays, at `R` and `2R`.
    pub a_window: f64,
    pub a_doubled: f64,
    /// Same, restricted to `x ≠ 0` (the decay part of the display).
    pub a_tail_window: f64,
    pub a_tail_doubled: f64,
    /// Log-log fit of `(f*f)` along the first axis over `[2L, R]` at window
    /// `2R`; the conclusion predicts slope `-(d-4)`.
    pub axis_fit: Option<LineFit>,
    /// `|A(2R)/A(R) - 1| <= 0.2`, and the same for the tail constant.
    pub report: InequalityReport,
}

fn ray_points(d: usize, t: i64) -> [Vec<i64>; 2] {
    let mut axis = vec![0; d];
    axis[0] = t;
    [axis, vec![t; d]]
}

/// `(A, A_tail)` over axis and diagonal points with `|x| <= R/2`.
fn fitted_constants(d: usize, l: i64, c: f64, window: i64) -> (f64, f64) {
    let mut a: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for t in 0..=window / 2 {
        for x in ray_points(d, t) {
            let ratio = self_convolution(d, l, c, window, &x) / convolution_bound(d, l, &x);
            a = a.max(ratio);
            if t > 0 {
                tail = tail.max(ratio);
            }
        }
    }
    (a, tail)
}

pub fn verify_convolution(d: usize, l: i64, window: i64, c: f64) -> Result<ConvolutionReport> {
    if d <= 4 {
        return Err(Error::usage("the convolution estimate needs d > 4"));
    }
    if d > crate::lattice::MAX_DIM {
        return Err(Error::usage(format!("dimension {d} exceeds the supported maximum")));
    }
    if l < 1 || !(c > 0.0 && c.is_finite()) {
        return Err(Error::usage("need L >= 1 and a positive finite C"));
    }
    if window < 2 {
        return Err(Error::usage("window must be at least 2"));
    }
    if 2 * window > MAX_WINDOW {
        return Err(Error::Capacity(format!("doubled window {} exceeds {MAX_WINDOW}", 2 * window)));
    }
    let (a_window, a_tail_window) = fitted_constants(d, l, c, window);
    let (a_doubled, a_tail_doubled) = fitted_constants(d, l, c, 2 * window);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for t in 2 * l..=window {
        let x = &ray_points(d, t)[0];
        xs.push((t as f64).ln());
        ys.push(self_convolution(d, l, c, 2 * window, x).ln());
    }
    let axis_fit = if xs.len() >= 2 { Some(weighted_line_fit(&xs, &ys, &vec![1.0; xs.len()])?) } else { None };
    let drift = (a_doubled / a_window - 1.0).abs().max((a_tail_doubled / a_tail_window - 1.0).abs());
    let report =
        InequalityReport::new(Check::Convolution, format!("d={d} L={l} R={window} C={c}"), drift, STABILITY_TOL);
    Ok(ConvolutionReport { d, l, window, c, a_window, a_doubled, a_tail_window, a_tail_doubled, axis_fit, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct `Σ_y f(y) f(x - y)` over `y ∈ Λ_R`.
    fn brute(d: usize, l: i64, c: f64, window: i64, x: &[i64]) -> f64 {
        let side = 2 * window + 1;
        let total = (side as usize).pow(d as u32);
        let mut sum = 0.0;
        let mut y = vec![0i64; d];
        for k in 0..total {
            let mut k = k;
            for yi in y.iter_mut() {
                *yi = (k % side as usize) as i64 - window;
                k /= side as usize;
            }
            let diff: Vec<i64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            sum += extremal_f(d, l, c, window, &y) * extremal_f(d, l, c, window, &diff);
        }
        sum
    }

    #[test]
    fn box_decomposition_matches_direct_summation() {
        for (d, l, window) in [(5, 1, 3), (5, 2, 3), (6, 1, 2)] {
            for x in [vec![0; d], ray_points(d, 1)[0].clone(), ray_points(d, 2)[1].clone(), {
                let mut v = vec![0; d];
                v[0] = -3;
                v[d - 1] = 1;
                v
            }] {
                let a = self_convolution(d, l, 1.5, window, &x);
                let b = brute(d, l, 1.5, window, &x);
                assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{d} {l} {x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn origin_value_is_at_least_one() {
        let v = self_convolution(7, 1, 1.0, 8, &[0; 7]);
        assert!(v >= 1.0 && v.is_finite());
    }

    #[test]
    fn hypothesis_is_saturated() {
        assert_eq!(extremal_f(5, 2, 1.0, 4, &[0; 5]), 1.0 + 1.0 / 32.0);
        assert_eq!(extremal_f(5, 2, 1.0, 4, &[5, 0, 0, 0, 0]), 0.0);
        let x = [4, 0, 0, 0, 0];
        assert!((extremal_f(5, 2, 1.0, 4, &x) - (1.0 / 32.0) * (0.5f64).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn small_dimension_is_rejected() {
        assert!(matches!(verify_convolution(4, 1, 8, 1.0), Err(Error::Usage(_))));
        assert!(matches!(verify_convolution(5, 1, 300, 1.0), Err(Error::Capacity(_))));
    }
}
