//! Profiles over nested region families from a single exploration per
//! sample: `k ↦ φ_β(Λ_k)` with shell counts and `χ`, and `n ↦ ψ_β(H_n)`
//! with pointwise half-space two-point values. Sharp lengths are read off
//! the box profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{McOptions, Method};
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::explore::{Explorer, Family};
use crate::percolation::graph::FiniteGraph;
use crate::rng::par_blocks;
use crate::stats::{check_censoring, Estimate, RunningMean};

const BLOCK: usize = 4096;

/// `φ_β(Λ_k)` for `k = 0..=k_max`, plus full-cluster observables when the
/// exploration was unbounded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxProfile {
    pub beta: f64,
    pub k_max: u32,
    /// Index `k` holds `φ_β(Λ_k)`; level `k` is censored when the site cap
    /// was hit before `Λ_k` was fully explored.
    pub phi: Vec<Estimate>,
    /// Index `r` holds `E #{x ∈ C(0) : |x|∞ = r}` (full exploration only).
    pub shell: Vec<Estimate>,
    /// `E|C(0)|` (full exploration only).
    pub chi: Option<Estimate>,
    pub censored_rate: f64,
}

fn box_exterior(y: &Point, k: i64, l: i64) -> f64 {
    let d = y.dim() as u32;
    let full = (2 * l + 1).pow(d);
    let inside: i64 = y
        .coords()
        .iter()
        .map(|&c| {
            let c = c as i64;
            ((c + l).min(k) - (c - l).max(-k) + 1).max(0)
        })
        .product();
    (full - inside) as f64
}

/// Box profile from `opts.n` nested explorations. With `full = true` the
/// whole cluster is explored, which also yields `χ` and the shell counts.
pub fn box_profile(model: &SpreadOutModel, k_max: u32, full: bool, opts: McOptions) -> Result<BoxProfile> {
    opts.check()?;
    let levels = k_max as usize + 1;
    let p = model.p_beta();
    let l = model.range();
    let explorer = Explorer::new(model)?;
    let max_level = if full { u32::MAX } else { k_max };
    let mut phi = vec![RunningMean::default(); levels];
    let mut shell = vec![RunningMean::default(); levels];
    let mut chi = RunningMean::default();
    let mut capped = 0usize;
    par_blocks(
        opts.n,
        opts.stream,
        BLOCK,
        |_, rng| {
            let c = explorer.nested(Family::Boxes, max_level, opts.cap, rng);
            let mut phis = vec![0.0; levels];
            let mut shells = vec![0.0; levels];
            for (y, &j) in c.sites.iter().zip(&c.joined) {
                let r = y.linf();
                if (r as usize) < levels {
                    shells[r as usize] += 1.0;
                }
                let lo = r.max(j as i64);
                let hi = (r + l - 1).min(k_max as i64);
                for k in lo..=hi {
                    phis[k as usize] += box_exterior(y, k, l) * p;
                }
            }
            (phis, shells, c.sites.len(), c.capped_at)
        },
        |_, (phis, shells, size, capped_at)| {
            for (k, v) in phis.into_iter().enumerate() {
                if capped_at.is_none_or(|c| (k as u32) < c) {
                    phi[k].push(v);
                }
            }
            if capped_at.is_none() {
                for (r, v) in shells.into_iter().enumerate() {
                    shell[r].push(v);
                }
                chi.push(size as f64);
            } else {
                capped += 1;
            }
        },
    );
    let rate = check_censoring(capped, opts.n)?;
    let per_level = |m: &RunningMean| {
        let e = m.estimate();
        let r = 1.0 - e.n_samples as f64 / opts.n as f64;
        e.with_censoring(r)
    };
    Ok(BoxProfile {
        beta: model.beta(),
        k_max,
        phi: phi.iter().map(per_level).collect(),
        shell: if full { shell.iter().map(|m| m.estimate().with_censoring(rate)).collect() } else { Vec::new() },
        chi: full.then(|| chi.estimate().with_censoring(rate)),
        censored_rate: rate,
    })
}

/// `ψ_β(H_n)` for `n = 0..=n_max`, `ψ^{[k]}_β(H_n)` for requested `k`, and
/// `P_β[0 ↔^H x]` on a grid of points of `H = H_0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfSpaceProfile {
    pub beta: f64,
    pub psi: Vec<Estimate>,
    /// `(k, [ψ^{[k]}(H_n) for n = 0..=n_max])`.
    pub psi_restricted: Vec<(i64, Vec<Estimate>)>,
    pub points: Vec<(Point, Estimate)>,
    pub censored_rate: f64,
}

/// Symmetry class of a point of `H` under permutations and reflections of
/// the transverse coordinates 2..d.
fn transverse_class(x: &Point) -> (i64, u128, u64) {
    if x.dim() == 1 {
        return (x.get(0), 0, 1);
    }
    let perp: Vec<i64> = x.coords()[1..].iter().map(|&c| c as i64).collect();
    let p = Point::new(&perp).expect("transverse coordinates fit");
    (x.get(0), p.canonical().key(), p.orbit_size())
}

pub fn halfspace_profile(
    model: &SpreadOutModel,
    n_max: u32,
    ks: &[i64],
    grid: &[Point],
    opts: McOptions,
) -> Result<HalfSpaceProfile> {
    opts.check()?;
    for x in grid {
        if x.dim() != model.dim() || x.get(0) < 0 {
            return Err(Error::usage(format!("grid point {x} is not in H")));
        }
    }
    let levels = n_max as usize + 1;
    let explorer = Explorer::new(model)?;
    let classes: Vec<(i64, u128, u64)> = grid.iter().map(transverse_class).collect();
    let mut psi = vec![RunningMean::default(); levels];
    let mut psik = vec![vec![RunningMean::default(); levels]; ks.len()];
    let mut pts = vec![RunningMean::default(); grid.len()];
    let mut capped = 0usize;
    par_blocks(
        opts.n,
        opts.stream,
        BLOCK,
        |_, rng| {
            let c = explorer.nested(Family::HalfSpaces, n_max, opts.cap, rng);
            let mut v = vec![0.0; levels];
            let mut vk = vec![vec![0.0; levels]; ks.len()];
            let mut vp = vec![0.0; grid.len()];
            for (y, &j) in c.sites.iter().zip(&c.joined) {
                if y.is_origin() {
                    continue;
                }
                let n = -y.get(0);
                if n >= 0 && (n as u32) <= n_max && j as i64 <= n {
                    v[n as usize] += 1.0;
                    for (i, &k) in ks.iter().enumerate() {
                        if y.linf() <= k {
                            vk[i][n as usize] += 1.0;
                        }
                    }
                }
                if j == 0 && !grid.is_empty() {
                    let cl = transverse_class(y);
                    for (i, c2) in classes.iter().enumerate() {
                        if c2.0 == cl.0 && c2.1 == cl.1 {
                            vp[i] += 1.0 / c2.2 as f64;
                        }
                    }
                }
            }
            (v, vk, vp, c.capped_at)
        },
        |_, (v, vk, vp, capped_at)| {
            let ok = |n: usize| capped_at.is_none_or(|c| (n as u32) < c);
            for (n, x) in v.into_iter().enumerate() {
                if ok(n) {
                    psi[n].push(x);
                }
            }
            for (i, row) in vk.into_iter().enumerate() {
                for (n, x) in row.into_iter().enumerate() {
                    if ok(n) {
                        psik[i][n].push(x);
                    }
                }
            }
            if ok(0) {
                for (i, x) in vp.into_iter().enumerate() {
                    pts[i].push(x);
                }
            }
            if capped_at.is_some() {
                capped += 1;
            }
        },
    );
    let rate = check_censoring(capped, opts.n)?;
    let est = |m: &RunningMean| {
        let e = m.estimate();
        let r = 1.0 - e.n_samples as f64 / opts.n as f64;
        e.with_censoring(r)
    };
    // The origin is in (∂H_0) but excluded by the star; ψ(H_n) at β = 0 is 0.
    Ok(HalfSpaceProfile {
        beta: model.beta(),
        psi: psi.iter().map(est).collect(),
        psi_restricted: ks.iter().zip(&psik).map(|(&k, row)| (k, row.iter().map(est).collect())).collect(),
        points: grid.iter().copied().zip(pts.iter().map(est)).collect(),
        censored_rate: rate,
    })
}

/// Value of a sharp length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharpValue {
    Finite(u32),
    /// No `k <= cap` qualified.
    Unbounded(u32),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpLength {
    pub beta: f64,
    pub value: SharpValue,
    pub epsilon: f64,
    /// The Monte Carlo interval at the returned `k` (or `k - 1`) straddles
    /// the threshold even after the sample size was increased.
    pub ambiguous: bool,
    pub n_samples: usize,
}

/// Default `ε = 1 - e^{-2}`, i.e. threshold `e^{-2}`.
pub fn default_epsilon() -> f64 {
    1.0 - (-2.0f64).exp()
}

fn first_crossing(phi: &[Estimate], threshold: f64) -> Option<(u32, bool)> {
    (1..phi.len()).find(|&k| phi[k].value <= threshold).map(|k| {
        let near = |e: &Estimate| (e.value - threshold).abs() <= 2.0 * e.std_error;
        let amb = near(&phi[k]) || (k > 1 && near(&phi[k - 1]));
        (k as u32, amb)
    })
}

impl SharpLength {
    /// Reads `L_β(ε)` off a box profile.
    pub fn from_profile(profile: &BoxProfile, epsilon: f64) -> Self {
        let thr = 1.0 - epsilon;
        let n = profile.phi.first().map_or(0, |e| e.n_samples);
        match first_crossing(&profile.phi, thr) {
            Some((k, amb)) => {
                SharpLength { beta: profile.beta, value: SharpValue::Finite(k), epsilon, ambiguous: amb, n_samples: n }
            }
            None => SharpLength {
                beta: profile.beta,
                value: SharpValue::Unbounded(profile.k_max),
                epsilon,
                ambiguous: false,
                n_samples: n,
            },
        }
    }
}

fn check_epsilon(epsilon: f64, cap: u32) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::usage(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if cap < 1 {
        return Err(Error::usage("cap must be at least 1"));
    }
    Ok(())
}

/// `L_β(ε) = inf{k >= 1 : φ_β(Λ_k) <= 1 - ε}`.
///
/// Monte Carlo: the profile range is doubled until a crossing appears or the
/// cap is reached; the first crossing is read off the profile directly (φ is
/// not monotone in `k`, so the first crossing is located by a scan). If the
/// interval at the crossing straddles the threshold, the sample size is
/// quadrupled once. Exact: `φ_β(Λ_k)` is enumerated on box substrates.
pub fn sharp_length(model: &SpreadOutModel, epsilon: f64, cap: u32, method: Method) -> Result<SharpLength> {
    check_epsilon(epsilon, cap)?;
    let thr = 1.0 - epsilon;
    if model.p_beta() == 0.0 {
        return Ok(SharpLength { beta: 0.0, value: SharpValue::Finite(1), epsilon, ambiguous: false, n_samples: 0 });
    }
    match method {
        Method::Exact(_) => {
            for k in 1..=cap {
                let g = FiniteGraph::box_substrate(model, k as i64)?;
                let v = super::phi(model, &Region::cube(model.dim(), k as i64), Method::Exact(&g))?.value;
                if v <= thr {
                    return Ok(SharpLength {
                        beta: model.beta(),
                        value: SharpValue::Finite(k),
                        epsilon,
                        ambiguous: false,
                        n_samples: 0,
                    });
                }
            }
            Ok(SharpLength {
                beta: model.beta(),
                value: SharpValue::Unbounded(cap),
                epsilon,
                ambiguous: false,
                n_samples: 0,
            })
        }
        Method::MonteCarlo(opts) => {
            let mut k_max = 4u32.min(cap);
            let mut opts = opts;
            let mut retried = false;
            loop {
                let prof = box_profile(model, k_max, false, opts)?;
                let sl = SharpLength::from_profile(&prof, epsilon);
                match sl.value {
                    SharpValue::Finite(_) if sl.ambiguous && !retried => {
                        retried = true;
                        opts.n *= 4;
                        opts.stream = opts.stream.named("retry");
                    }
                    SharpValue::Finite(_) => return Ok(sl),
                    SharpValue::Unbounded(_) if k_max >= cap => {
                        return Ok(SharpLength { value: SharpValue::Unbounded(cap), ..sl });
                    }
                    SharpValue::Unbounded(_) => k_max = (2 * k_max).min(cap),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::phi;

    #[test]
    fn box_exterior_matches_region() {
        let y = Point::new(&[2, -1, 0]).unwrap();
        for k in 2..5 {
            assert_eq!(box_exterior(&y, k, 2), Region::cube(3, k).exterior_count(&y, 2) as f64);
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        // d = 1, L = 1: φ_β(Λ_k) = 2 p^{k+1}.
        let m = SpreadOutModel::new(1, 1, 1.3).unwrap();
        let p = m.p_beta();
        let prof = box_profile(&m, 5, true, McOptions::new(100_000, 3)).unwrap();
        for k in 0..=5usize {
            let exact = 2.0 * p.powi(k as i32 + 1);
            assert!(prof.phi[k].z_score(exact) < 4.0, "k={k}: {:?} vs {exact}", prof.phi[k]);
            let g = FiniteGraph::box_substrate(&m, k as i64).unwrap();
            let e = phi(&m, &Region::cube(1, k as i64), Method::Exact(&g)).unwrap().value;
            assert!((e - exact).abs() < 1e-12);
        }
        let chi_exact = (1.0 + p) / (1.0 - p);
        assert!(prof.chi.unwrap().z_score(chi_exact) < 4.0);
    }

    #[test]
    fn profile_agrees_with_direct_phi() {
        let m = SpreadOutModel::new(2, 2, 1.1).unwrap();
        let prof = box_profile(&m, 3, false, McOptions::new(40_000, 1)).unwrap();
        for k in 1..=3 {
            let direct =
                phi(&m, &Region::cube(2, k), Method::MonteCarlo(McOptions::new(40_000, 50 + k as u64))).unwrap();
            let a = &prof.phi[k as usize];
            let diff = (a.value - direct.value).abs();
            assert!(diff < 4.0 * (a.std_error.powi(2) + direct.std_error.powi(2)).sqrt(), "k={k}");
        }
    }

    #[test]
    fn beta_zero_profiles_vanish() {
        let m = SpreadOutModel::new(2, 1, 0.0).unwrap();
        let prof = box_profile(&m, 3, true, McOptions::new(10, 1)).unwrap();
        assert!(prof.phi.iter().all(|e| e.value == 0.0));
        assert_eq!(prof.chi.unwrap().value, 1.0);
        let h = halfspace_profile(&m, 3, &[1], &[Point::new(&[1, 0]).unwrap()], McOptions::new(10, 1)).unwrap();
        assert!(h.psi.iter().all(|e| e.value == 0.0));
        let sl = sharp_length(&m, default_epsilon(), 10, Method::MonteCarlo(McOptions::new(10, 1))).unwrap();
        assert_eq!(sl.value, SharpValue::Finite(1));
    }

    #[test]
    fn exact_sharp_length_brackets_threshold() {
        let eps = default_epsilon();
        for beta in [0.5, 1.0, 1.5, 1.9] {
            let m = SpreadOutModel::new(1, 1, beta).unwrap();
            let sl = sharp_length(&m, eps, 12, Method::Exact(&FiniteGraph::box_substrate(&m, 0).unwrap())).unwrap();
            let SharpValue::Finite(k) = sl.value else { panic!("unbounded") };
            let p = m.p_beta();
            let phi = |k: u32| 2.0 * p.powi(k as i32 + 1);
            assert!(phi(k) <= 1.0 - eps);
            if k > 1 {
                assert!(phi(k - 1) > 1.0 - eps);
            }
        }
    }

    #[test]
    fn epsilon_monotonicity() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        let prof = box_profile(&m, 8, false, McOptions::new(20_000, 9)).unwrap();
        let mut prev = 0u32;
        for eps in [0.1, 0.3, 0.5, 0.7, default_epsilon(), 0.95] {
            let SharpValue::Finite(k) = SharpLength::from_profile(&prof, eps).value else { panic!() };
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn psi_profile_matches_direct_estimates() {
        let m = SpreadOutModel::new(2, 1, 1.4).unwrap();
        let grid = [Point::new(&[0, 1]).unwrap(), Point::new(&[2, 0]).unwrap()];
        let h = halfspace_profile(&m, 3, &[1, 2], &grid, McOptions::new(40_000, 2)).unwrap();
        for n in 0..=3i64 {
            let d = super::super::psi(&m, n, Method::MonteCarlo(McOptions::new(40_000, 70 + n as u64))).unwrap();
            let a = &h.psi[n as usize];
            assert!((a.value - d.value).abs() < 4.0 * (a.std_error.powi(2) + d.std_error.powi(2)).sqrt());
            for (_, row) in &h.psi_restricted {
                assert!(row[n as usize].value <= a.value + 1e-12);
            }
        }
        let direct = super::super::two_point(
            &m,
            &Region::HalfSpace { shift: 0 },
            &m.origin(),
            &grid[0],
            Method::MonteCarlo(McOptions::new(40_000, 99)),
        )
        .unwrap();
        let a = &h.points[0].1;
        assert!((a.value - direct.value).abs() < 4.0 * (a.std_error.powi(2) + direct.std_error.powi(2)).sqrt());
    }

    #[test]
    fn rejects_bad_epsilon() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        assert!(sharp_length(&m, 1.5, 4, Method::MonteCarlo(McOptions::new(10, 1))).is_err());
    }
}
