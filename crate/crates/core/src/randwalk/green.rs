//! Half-space Green functions, gambler's ruin and finite-horizon exit
//! probabilities.
//!
//! The dynamic-programming Green function exploits translation invariance
//! across the half-space boundary: after a discrete Fourier transform in the
//! `d - 1` transverse coordinates (period `M`), each mode is a banded linear
//! system on the depth coordinate `x_1 ∈ [0, W]`, killed below 0 and
//! truncated above `W`. The leakage audit compares the result with the
//! `(W/2, M/2)` window; the absolute change bounds the truncation error.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::randwalk::{pos_of, RwOptions, StepDistribution, StepKind};
use crate::rng::par_samples;
use crate::stats::Estimate;

/// Largest tolerated change of the DP Green function under window halving.
pub const MAX_LEAKAGE: f64 = 1e-6;

/// Truncation of the DP: depth `W` in `x_1` and transverse period `M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpWindow {
    pub depth: usize,
    pub period: usize,
}

impl DpWindow {
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => DpWindow { depth: 1 << 14, period: 1 },
            2 => DpWindow { depth: 4096, period: 8192 },
            _ => DpWindow { depth: 512, period: 1024 },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum GreenMethod {
    Dp(DpWindow),
    MonteCarlo(RwOptions),
}

/// Row-major band storage of an `n × n` matrix with half-bandwidth `l`:
/// entry `(i, j)` lives at `i * (2l + 1) + (j + l - i)`.
pub(crate) struct Banded {
    n: usize,
    l: usize,
    a: Vec<f64>,
}

impl Banded {
    pub(crate) fn new(n: usize, l: usize) -> Self {
        Banded { n, l, a: vec![0.0; n * (2 * l + 1)] }
    }

    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * (2 * self.l + 1) + (j + self.l - i)] += v;
    }

    /// Gaussian elimination without pivoting; the matrices used here are
    /// (weakly) diagonally dominant.
    pub(crate) fn solve(mut self, rhs: &[f64]) -> Vec<f64> {
        let (n, l) = (self.n, self.l);
        let w = 2 * l + 1;
        let a = &mut self.a;
        let mut b = rhs.to_vec();
        for i in 0..n {
            let piv = a[i * w + l];
            for r in i + 1..(i + l + 1).min(n) {
                let f = a[r * w + (i + l - r)] / piv;
                if f == 0.0 {
                    continue;
                }
                for c in i..(i + l + 1).min(n) {
                    a[r * w + (c + l - r)] -= f * a[i * w + (c + l - i)];
                }
                b[r] -= f * b[i];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in i + 1..(i + l + 1).min(n) {
                s -= a[i * w + (c + l - i)] * x[c];
            }
            x[i] = s / a[i * w + l];
        }
        x
    }
}

/// Solves `A g = rhs` for the symmetric banded Toeplitz matrix with
/// `A_{ij} = band[|i - j|]` (zero beyond the band) of size `n`.
pub(crate) fn solve_banded_toeplitz(band: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let l = band.len() - 1;
    let mut m = Banded::new(n, l);
    for i in 0..n {
        for j in i.saturating_sub(l)..(i + l + 1).min(n) {
            m.add(i, j, band[i.abs_diff(j)]);
        }
    }
    m.solve(rhs)
}

/// `D_L(k) = Σ_{|b| <= L} cos(k b)`.
fn dirichlet(l: i64, k: f64) -> f64 {
    1.0 + 2.0 * (1..=l).map(|b| (k * b as f64).cos()).sum::<f64>()
}

fn green_dp_window(d: usize, l: i64, targets: &[Point], win: DpWindow) -> Vec<f64> {
    let n = win.depth + 1;
    let c = crate::lattice::SpreadOutModel::new(d, l, 0.0).expect("validated").c_l();
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;
    let t = d - 1;
    let m = win.period.max(1);
    let half = m / 2;
    let wave = |i: usize| 2.0 * std::f64::consts::PI * i as f64 / m as f64;
    // Transverse modes k_j = 2π i_j / M with i_j ∈ [0, M/2]; the modes i_j and
    // M - i_j coincide after summing the cosines, giving weight 2 off the ends.
    // The system depends on the mode only through Π_j D_L(k_j), so one solve
    // serves every permutation of a nondecreasing index tuple.
    let range = if t == 0 { 1 } else { half + 1 };
    let tuples: Vec<Vec<usize>> = match t {
        0 => vec![vec![]],
        1 => (0..range).map(|i| vec![i]).collect(),
        _ => (0..range).flat_map(|i| (i..range).map(move |j| vec![i, j])).collect(),
    };
    let end_weight = |i: usize| if i == 0 || (m.is_multiple_of(2) && i == half) { 1.0 } else { 2.0 };
    let parts: Vec<Vec<f64>> = tuples
        .par_iter()
        .map(|idx| {
            let p: f64 = idx.iter().map(|&i| dirichlet(l, wave(i))).product();
            // (I - K_k) on depths 0..=W. Depths below 0 are killed; depths
            // above W are identified with W, which matches the flat asymptote
            // of each mode up to exponentially small corrections.
            let mut sys = Banded::new(n, l as usize);
            for x in 0..n {
                sys.add(x, x, 1.0 + c);
                for dx in -l..=l {
                    let y = x as i64 + dx;
                    if y >= 0 {
                        sys.add(x, (y as usize).min(n - 1), -c * p);
                    }
                }
            }
            let g = sys.solve(&rhs);
            let mut perms = vec![idx.clone()];
            if t == 2 && idx[0] != idx[1] {
                perms.push(vec![idx[1], idx[0]]);
            }
            targets
                .iter()
                .map(|x| {
                    let x1 = x.get(0) as usize;
                    perms
                        .iter()
                        .map(|q| {
                            q.iter()
                                .enumerate()
                                .map(|(j, &i)| end_weight(i) * (wave(i) * x.get(j + 1) as f64).cos())
                                .product::<f64>()
                        })
                        .sum::<f64>()
                        * g[x1.min(n - 1)]
                })
                .collect()
        })
        .collect();
    let norm = (m as f64).powi(t as i32);
    (0..targets.len()).map(|j| crate::stats::kahan_sum(parts.iter().map(|v| v[j])) / norm).collect()
}

/// `E_0[Σ_{ℓ < τ} 1{X_ℓ = x}]` with `τ = inf{ℓ >= 1 : X_ℓ ∉ H}`, for each
/// target `x`.
///
/// Monte Carlo uses the one-step (conditional expectation) form
/// `1{x = 0} + E[Σ_{ℓ < τ} μ(x - X_ℓ)]`, which has the same mean as the
/// visit count and a smaller variance; the horizon truncates the sum.
pub fn halfspace_green(step: &StepDistribution, targets: &[Point], method: GreenMethod) -> Result<Vec<Estimate>> {
    let d = step.dim();
    for x in targets {
        if x.dim() != d {
            return Err(Error::usage("target dimension does not match the step law"));
        }
    }
    let inside: Vec<bool> = targets.iter().map(|x| x.get(0) >= 0).collect();
    match method {
        GreenMethod::Dp(win) => {
            let StepKind::UniformSpread { range } = *step.kind() else {
                return Err(Error::usage("the DP Green function supports the spread-out step law only"));
            };
            if d > 3 {
                return Err(Error::usage("the DP Green function is limited to d <= 3"));
            }
            if win.depth < 2 || (d > 1 && win.period < 2 * (2 * range as usize + 1)) {
                return Err(Error::usage("DP window too small for the step range"));
            }
            for x in targets {
                if x.get(0) as usize > win.depth / 2
                    || (1..d).any(|j| x.get(j).unsigned_abs() as usize > win.period / 4)
                {
                    return Err(Error::capacity(format!("target {x} lies outside the audited DP window")));
                }
            }
            let full = green_dp_window(d, range, targets, win);
            let halfw = DpWindow { depth: win.depth / 2, period: (win.period / 2).max(1) };
            let coarse = green_dp_window(d, range, targets, halfw);
            let leak = full.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if leak > MAX_LEAKAGE {
                return Err(Error::capacity(format!(
                    "DP window leakage {leak:.2e} exceeds {MAX_LEAKAGE:.0e}; enlarge the window"
                )));
            }
            let tag = format!("dp depth {} period {} leakage {leak:.1e}", win.depth, win.period);
            Ok(full
                .into_iter()
                .zip(&inside)
                .map(|(v, &ins)| Estimate::exact(if ins { v } else { 0.0 }).with_truncation(tag.clone()))
                .collect())
        }
        GreenMethod::MonteCarlo(o) => {
            o.check()?;
            let tp: Vec<[i64; MAX_DIM]> = targets.iter().map(pos_of).collect();
            let rows = par_samples(o.n, o.stream, |_, rng| {
                let mut acc = vec![0.0; tp.len()];
                let mut x = [0i64; MAX_DIM];
                let mut dx = [0i64; MAX_DIM];
                let mut diff = [0i64; MAX_DIM];
                for _ in 0..o.horizon {
                    for (a, t) in acc.iter_mut().zip(&tp) {
                        for i in 0..d {
                            diff[i] = t[i] - x[i];
                        }
                        *a += step.mass_pos(&diff);
                    }
                    step.sample(rng, &mut dx);
                    for i in 0..d {
                        x[i] += dx[i];
                    }
                    if x[0] < 0 {
                        break;
                    }
                }
                acc
            });
            Ok((0..targets.len())
                .map(|j| {
                    if !inside[j] {
                        return Estimate::exact(0.0);
                    }
                    let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                    let mut e = Estimate::from_samples(&col);
                    if targets[j].is_origin() {
                        e.value += 1.0;
                    }
                    e.with_truncation(format!("horizon {}", o.horizon))
                })
                .collect())
        }
    }
}

/// Law of the first coordinate of one step, as `(values, masses)`.
pub fn first_coordinate_marginal(step: &StepDistribution) -> (Vec<i64>, Vec<f64>) {
    let mut m: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (p, w) in step.support() {
        *m.entry(p.get(0)).or_insert(0.0) += w;
    }
    m.into_iter().unzip()
}

struct Marginal {
    values: Vec<i64>,
    alias: WeightedAliasIndex<f64>,
}

impl Marginal {
    fn new(step: &StepDistribution) -> Result<Self> {
        let (values, masses) = first_coordinate_marginal(step);
        let alias = WeightedAliasIndex::new(masses).map_err(|e| Error::Internal(format!("alias table: {e}")))?;
        Ok(Marginal { values, alias })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.values[self.alias.sample(rng)]
    }
}

/// `P_0[τ̃_k < τ]`: the first coordinate reaches `k` before it turns
/// negative. Only the first coordinate is simulated, using its exact
/// marginal law. The horizon caps the number of steps; unfinished
/// trajectories count as failures and are reported in the truncation field.
pub fn gamblers_ruin(step: &StepDistribution, k: i64, opts: RwOptions) -> Result<Estimate> {
    if k < 1 {
        return Err(Error::usage("level k must be at least 1"));
    }
    opts.check()?;
    let marg = Marginal::new(step)?;
    let rows = par_samples(opts.n, opts.stream, |_, rng| {
        let mut x = 0i64;
        for _ in 0..opts.horizon {
            x += marg.sample(rng);
            if x >= k {
                return (1.0, false);
            }
            if x < 0 {
                return (0.0, false);
            }
        }
        (0.0, true)
    });
    let unfinished = rows.iter().filter(|r| r.1).count();
    let vals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut e = Estimate::from_samples(&vals);
    if unfinished > 0 {
        e = e.with_truncation(format!("{unfinished} trajectories reached horizon {}", opts.horizon));
    }
    Ok(e)
}

/// Exact `P_0[τ̃_k < τ]` from the linear system for the first coordinate
/// on the states `0..k`.
pub fn gamblers_ruin_exact(step: &StepDistribution, k: i64) -> Result<f64> {
    if k < 1 {
        return Err(Error::usage("level k must be at least 1"));
    }
    let (values, masses) = first_coordinate_marginal(step);
    let mass_at = |v: i64| values.iter().position(|&u| u == v).map_or(0.0, |i| masses[i]);
    if values.iter().any(|&v| (mass_at(v) - mass_at(-v)).abs() > 1e-12) {
        return Err(Error::usage("the exact gambler's ruin requires a symmetric marginal"));
    }
    let r = values.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as usize;
    // (I - K) on the states 0..k; jumps to >= k succeed, jumps below 0 fail.
    let mut band = vec![0.0; r + 1];
    band[0] = 1.0;
    for (j, b) in band.iter_mut().enumerate() {
        *b -= mass_at(j as i64);
    }
    let n = k as usize;
    let rhs: Vec<f64> =
        (0..k).map(|x| values.iter().zip(&masses).filter(|(&v, _)| x + v >= k).map(|(_, &w)| w).sum()).collect();
    Ok(solve_banded_toeplitz(&band, n, &rhs)[0])
}

/// `P_0[τ_k < h]` for each horizon `h`, where `τ_k = inf{ℓ >= 1 : X_ℓ ∉ H_k}`.
/// All horizons are read from the same trajectories, so the estimates are
/// monotone in `h` sample by sample.
pub fn exit_probability_finite(
    step: &StepDistribution,
    k: i64,
    horizons: &[u64],
    n: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if k < 0 {
        return Err(Error::usage("k must be nonnegative"));
    }
    if n == 0 || horizons.is_empty() {
        return Err(Error::usage("need at least one trajectory and one horizon"));
    }
    let h_max = *horizons.iter().max().unwrap();
    let marg = Marginal::new(step)?;
    let times = par_samples(n, crate::rng::RngStream::new(seed), |_, rng| {
        let mut x = 0i64;
        for t in 1..h_max {
            x += marg.sample(rng);
            if x < -k {
                return Some(t);
            }
        }
        None
    });
    Ok(horizons
        .iter()
        .map(|&h| {
            let v: Vec<f64> = times.iter().map(|t| t.is_some_and(|t| t < h) as u8 as f64).collect();
            Estimate::from_samples(&v).with_truncation(format!("horizon {h}"))
        })
        .collect())
}
