//! Ornstein coupling of two spread-out walks started at `u` and `v`.
//!
//! Phase one runs `T - 1` coupled steps. Coordinates whose difference lies
//! in the band `[-b, b]` move together; every other coordinate `i` uses the
//! reflection rule: walk one steps by `ω_i`, walk two by `ω'_i` when
//! `|ω_i - ω'_i| <= a` and by `ω_i` otherwise. Each coordinate difference
//! therefore performs a walk with jumps bounded by `a` that freezes once it
//! enters the band. Phase two is one maximally coupled step when the
//! difference lies in the band, and a common shift otherwise.
//!
//! Steps are drawn as uniform vectors on the cube `[-L, L]^d`, rejecting the
//! zero vector. The coordinates of a cube draw are independent, so the
//! coordinatewise rule preserves each walk's law; each walk rejects its own
//! zero draws, which keeps both marginals exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::randwalk::{linf, pos_of, Pos};
use crate::rng::{par_samples, RngStream};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptions {
    /// `κ`: the acceptance threshold is `a = 1 ∨ ⌊κL⌋`.
    pub kappa: f64,
    /// When set, the freezing band is `b = a` (at least 1). When unset it is
    /// `⌊κL⌋`, so for `κL < 1` the differences must meet exactly.
    pub band_floor: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { kappa: 0.125, band_floor: true }
    }
}

impl CouplingOptions {
    fn thresholds(&self, l: i64) -> Result<(i64, i64)> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::usage("kappa must be positive"));
        }
        let kl = (self.kappa * l as f64).floor() as i64;
        let a = kl.max(1);
        let b = if self.band_floor { a } else { kl };
        Ok((a, b))
    }
}

/// Exact total variation distance between one spread-out step from `u` and
/// one from `v`, where `delta = u - v`.
pub fn step_tv(d: usize, l: i64, delta: &[i64]) -> Result<f64> {
    if delta.len() != d {
        return Err(Error::usage("offset dimension mismatch"));
    }
    let m = crate::lattice::SpreadOutModel::new(d, l, 0.0)?;
    let r = delta.iter().map(|x| x.abs()).max().unwrap_or(0);
    if r == 0 {
        return Ok(0.0);
    }
    let cube: f64 = delta.iter().map(|x| (2 * l + 1 - x.abs()).max(0) as f64).product();
    // Common support of Λ_L(u) \ {u} and Λ_L(v) \ {v}: the cube overlap minus
    // the two centres when each lies in the other's box.
    let overlap = if r <= l { cube - 2.0 } else { cube };
    Ok(1.0 - m.c_l() * overlap)
}

#[inline]
fn cube_step<R: Rng + ?Sized>(rng: &mut R, d: usize, l: i64, out: &mut Pos) -> bool {
    let mut nz = false;
    for c in out.iter_mut().take(d) {
        *c = rng.random_range(-l..=l);
        nz |= *c != 0;
    }
    nz
}

/// One uniform draw from `Λ_L(x) \ {x}`.
#[inline]
fn spread_step<R: Rng + ?Sized>(rng: &mut R, d: usize, l: i64, out: &mut Pos) {
    while !cube_step(rng, d, l, out) {}
}

struct Coupler {
    d: usize,
    l: i64,
    a: i64,
    b: i64,
}

impl Coupler {
    /// Coupled pair of step vectors for the current difference `diff`.
    /// Returns `(step_1, step_2)`.
    fn coupled_steps<R: Rng + ?Sized>(&self, rng: &mut R, diff: &Pos) -> (Pos, Pos) {
        let d = self.d;
        let mut s1 = None;
        let mut s2 = None;
        let mut w = [0i64; MAX_DIM];
        let mut w2 = [0i64; MAX_DIM];
        while s1.is_none() || s2.is_none() {
            let mut w_prime = [0i64; MAX_DIM];
            cube_step(rng, d, self.l, &mut w);
            cube_step(rng, d, self.l, &mut w_prime);
            for i in 0..d {
                w2[i] = if diff[i].abs() <= self.b || (w[i] - w_prime[i]).abs() > self.a { w[i] } else { w_prime[i] };
            }
            if s1.is_none() && w[..d].iter().any(|&c| c != 0) {
                s1 = Some(w);
            }
            if s2.is_none() && w2[..d].iter().any(|&c| c != 0) {
                s2 = Some(w2);
            }
        }
        (s1.unwrap(), s2.unwrap())
    }

    fn in_band(&self, diff: &Pos) -> bool {
        linf(diff, self.d) <= self.b
    }

    /// Final maximally coupled step from `x` and `y`.
    fn maximal_step<R: Rng + ?Sized>(&self, rng: &mut R, x: &Pos, y: &Pos) -> (Pos, Pos) {
        let d = self.d;
        let mut s = [0i64; MAX_DIM];
        spread_step(rng, d, self.l, &mut s);
        let mut yu = *x;
        for i in 0..d {
            yu[i] += s[i];
        }
        let in_support = |z: &Pos, c: &Pos| {
            let mut r = 0;
            for i in 0..d {
                r = r.max((z[i] - c[i]).abs());
            }
            r >= 1 && r <= self.l
        };
        if in_support(&yu, y) {
            return (yu, yu);
        }
        loop {
            spread_step(rng, d, self.l, &mut s);
            let mut yv = *y;
            for i in 0..d {
                yv[i] += s[i];
            }
            if !in_support(&yv, x) {
                return (yu, yv);
            }
        }
    }

    /// Endpoints `(Y^u, Y^v)` after `t` coupled steps.
    fn run<R: Rng + ?Sized>(&self, rng: &mut R, u: &Pos, v: &Pos, t: u64) -> (Pos, Pos) {
        let d = self.d;
        let (mut x, mut y) = (*u, *v);
        let mut diff = [0i64; MAX_DIM];
        for i in 0..d {
            diff[i] = x[i] - y[i];
        }
        for _ in 0..t - 1 {
            let (s1, s2) = self.coupled_steps(rng, &diff);
            for i in 0..d {
                x[i] += s1[i];
                y[i] += s2[i];
                diff[i] = x[i] - y[i];
            }
        }
        if self.in_band(&diff) {
            self.maximal_step(rng, &x, &y)
        } else {
            let mut s = [0i64; MAX_DIM];
            spread_step(rng, d, self.l, &mut s);
            for i in 0..d {
                x[i] += s[i];
                y[i] += s[i];
            }
            (x, y)
        }
    }

    /// Whether the endpoints differ. Once every coordinate difference is in
    /// the band, both walks use identical steps and the difference is
    /// frozen, so phase one can stop early.
    fn mismatch<R: Rng + ?Sized>(&self, rng: &mut R, u: &Pos, v: &Pos, t: u64) -> bool {
        let d = self.d;
        let mut diff = [0i64; MAX_DIM];
        for i in 0..d {
            diff[i] = u[i] - v[i];
        }
        for _ in 0..t - 1 {
            if self.in_band(&diff) {
                break;
            }
            let (s1, s2) = self.coupled_steps(rng, &diff);
            for i in 0..d {
                diff[i] += s1[i] - s2[i];
            }
        }
        if !self.in_band(&diff) {
            return true;
        }
        let zero = [0i64; MAX_DIM];
        let (a, b) = self.maximal_step(rng, &diff, &zero);
        a != b
    }
}

fn prepare(d: usize, l: i64, u: &Point, v: &Point, t: u64, opts: &CouplingOptions) -> Result<Coupler> {
    if u.dim() != d || v.dim() != d {
        return Err(Error::usage("start points must have dimension d"));
    }
    if l < 1 || d == 0 || d > MAX_DIM {
        return Err(Error::usage("need L >= 1 and 1 <= d <= 8"));
    }
    if u.linf() > 2 * l || v.linf() > 2 * l {
        return Err(Error::usage("start points must lie in the box of radius 2L"));
    }
    if t == 0 {
        return Err(Error::usage("T must be at least 1"));
    }
    let (a, b) = opts.thresholds(l)?;
    Ok(Coupler { d, l, a, b })
}

/// Empirical `P[Y^u ≠ Y^v]` over `n` coupled pairs run for `t` steps.
#[allow(clippy::too_many_arguments)]
pub fn ornstein_coupling(
    d: usize,
    l: i64,
    u: &Point,
    v: &Point,
    t: u64,
    n: usize,
    seed: u64,
    opts: &CouplingOptions,
) -> Result<Estimate> {
    let c = prepare(d, l, u, v, t, opts)?;
    if n == 0 {
        return Err(Error::usage("number of pairs must be positive"));
    }
    if u == v {
        return Ok(Estimate::exact(0.0));
    }
    let (pu, pv) = (pos_of(u), pos_of(v));
    let hits = par_samples(n, RngStream::new(seed), |_, rng| c.mismatch(rng, &pu, &pv, t) as u8 as f64);
    Ok(Estimate::from_samples(&hits).with_truncation(format!("T = {t}")))
}

/// Coupled endpoints, for checks of the marginal laws.
#[allow(clippy::too_many_arguments)]
pub fn ornstein_endpoints(
    d: usize,
    l: i64,
    u: &Point,
    v: &Point,
    t: u64,
    n: usize,
    seed: u64,
    opts: &CouplingOptions,
) -> Result<Vec<(Pos, Pos)>> {
    let c = prepare(d, l, u, v, t, opts)?;
    let (pu, pv) = (pos_of(u), pos_of(v));
    Ok(par_samples(n, RngStream::new(seed), |_, rng| c.run(rng, &pu, &pv, t)))
}

/// Smallest `T = 2^j` with mismatch at most `target`, doubling up to
/// `t_max`. Returns `T` and the mismatch estimate there.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_coupling_time(
    d: usize,
    l: i64,
    u: &Point,
    v: &Point,
    target: f64,
    n: usize,
    seed: u64,
    t_max: u64,
    opts: &CouplingOptions,
) -> Result<(u64, Estimate)> {
    let mut t = 1;
    loop {
        let e = ornstein_coupling(d, l, u, v, t, n, seed, opts)?;
        log::debug!("coupling calibration: L={l} T={t} mismatch {:.4}", e.value);
        if e.value <= target {
            return Ok((t, e));
        }
        t *= 2;
        if t > t_max {
            return Err(Error::capacity(format!(
                "mismatch {:.3} still above {target} at T = {}; raise the step budget",
                e.value,
                t / 2
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn p(c: &[i64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn tv_by_direct_summation() {
        // Oracle: ½ Σ_y |J(u, y) - J(v, y)| over an enclosing window.
        for (d, l, delta) in [(1, 2, vec![1]), (2, 1, vec![1, 1]), (2, 2, vec![3, 0]), (1, 3, vec![7])] {
            let c = 1.0 / ((2 * l + 1) as f64).powi(d as i32 - 1) / (2 * l + 1) as f64;
            let c = 1.0 / (1.0 / c - 1.0);
            let r = 3 * l + 8;
            let mut sum = 0.0;
            let pts: Vec<Vec<i64>> = if d == 1 {
                (-r..=r).map(|a| vec![a]).collect()
            } else {
                (-r..=r).flat_map(|a| (-r..=r).map(move |b| vec![a, b])).collect()
            };
            for y in pts {
                let ju = {
                    let m = y.iter().map(|x| x.abs()).max().unwrap();
                    if m >= 1 && m <= l {
                        c
                    } else {
                        0.0
                    }
                };
                let jv = {
                    let m = y.iter().zip(&delta).map(|(a, b)| (a + b).abs()).max().unwrap();
                    if m >= 1 && m <= l {
                        c
                    } else {
                        0.0
                    }
                };
                sum += (ju - jv).abs();
            }
            let tv = step_tv(d, l, &delta).unwrap();
            assert!((tv - 0.5 * sum).abs() < 1e-12, "d={d} L={l} δ={delta:?}: {tv} vs {}", 0.5 * sum);
        }
        assert!((step_tv(1, 2, &[1]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_starts_never_mismatch() {
        let e = ornstein_coupling(2, 3, &p(&[1, 1]), &p(&[1, 1]), 5, 10, 1, &CouplingOptions::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn single_step_attains_total_variation() {
        let e = ornstein_coupling(1, 2, &p(&[1]), &p(&[0]), 1, 40_000, 2, &CouplingOptions::default()).unwrap();
        assert!(e.z_score(0.5) < 3.0, "{e:?}");
    }

    #[test]
    fn mismatch_decreases_with_time() {
        let o = CouplingOptions::default();
        let a = ornstein_coupling(1, 16, &p(&[16]), &p(&[0]), 4, 20_000, 3, &o).unwrap();
        let b = ornstein_coupling(1, 16, &p(&[16]), &p(&[0]), 256, 20_000, 3, &o).unwrap();
        assert!(b.value < a.value);
    }

    #[test]
    fn marginals_are_exact_two_step_laws() {
        // Oracle: the two-step law J * J by direct convolution.
        let (d, l) = (2usize, 2i64);
        let offs: Vec<(i64, i64)> =
            (-l..=l).flat_map(|a| (-l..=l).map(move |b| (a, b))).filter(|&(a, b)| a != 0 || b != 0).collect();
        let c = 1.0 / offs.len() as f64;
        let mut law = std::collections::HashMap::new();
        for &(a, b) in &offs {
            for &(e, f) in &offs {
                *law.entry((a + e, b + f)).or_insert(0.0) += c * c;
            }
        }
        let u = p(&[3, 1]);
        let v = p(&[0, 0]);
        let n = 200_000;
        for opts in [CouplingOptions::default(), CouplingOptions { kappa: 0.5, band_floor: false }] {
            let pts = ornstein_endpoints(d, l, &u, &v, 2, n, 7, &opts).unwrap();
            for (which, start) in [(0, &u), (1, &v)] {
                let mut counts = std::collections::HashMap::new();
                for pr in &pts {
                    let z = if which == 0 { pr.0 } else { pr.1 };
                    *counts.entry((z[0] - start.get(0), z[1] - start.get(1))).or_insert(0usize) += 1;
                }
                assert!(counts.keys().all(|k| law.contains_key(k)));
                let stat: f64 = law
                    .iter()
                    .map(|(k, &q)| {
                        let e = q * n as f64;
                        let o = *counts.get(k).unwrap_or(&0) as f64;
                        (o - e).powi(2) / e
                    })
                    .sum();
                let crit = ChiSquared::new((law.len() - 1) as f64).unwrap().inverse_cdf(0.999);
                assert!(stat < crit, "walk {which}: χ² = {stat} ≥ {crit}");
            }
        }
    }

    #[test]
    fn calibration_finds_a_time() {
        let (t, e) =
            calibrate_coupling_time(1, 8, &p(&[8]), &p(&[0]), 0.3, 4_000, 5, 1 << 16, &CouplingOptions::default())
                .unwrap();
        assert!(e.value <= 0.3 && t.is_power_of_two());
    }

    #[test]
    fn rejects_far_starts() {
        let o = CouplingOptions::default();
        assert!(ornstein_coupling(1, 2, &p(&[5]), &p(&[0]), 3, 10, 1, &o).is_err());
        assert!(ornstein_coupling(1, 2, &p(&[1]), &p(&[0]), 0, 10, 1, &o).is_err());
    }
}
