//! Scalar and profile quantities of spread-out percolation: two-point
//! functions, `φ_β`, `ψ_β`, sharp lengths, `β₀`, susceptibility,
//! correlation length, triangle diagram, error terms and bootstrap checks.
//!
//! Half-space and full-lattice sums are always estimated as cluster
//! functionals: one exploration yields every term of the sum at once.

pub mod bootstrap;
pub mod critical;
pub mod error_term;
pub mod green;
pub mod profile;
pub mod triangle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::explore::{Explorer, DEFAULT_CAP};
use crate::percolation::graph::{connect_prob_mask, exact_tables, FiniteGraph};
use crate::rng::{par_samples, RngStream};
use crate::stats::{check_censoring, Estimate};

pub use bootstrap::{bootstrap_check, BootstrapOptions, BootstrapReport};
pub use critical::{operational_critical_point, CriticalPoint, CriticalSearch};
pub use error_term::{error_amplitude, error_term, ErrorAmplitudeOptions};
pub use profile::{
    box_profile, halfspace_profile, sharp_length, BoxProfile, HalfSpaceProfile, SharpLength, SharpValue,
};
pub use triangle::{triangle, TriangleOptions, TriangleReport};

/// Monte Carlo parameters shared by all estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n: usize,
    pub stream: RngStream,
    pub cap: usize,
}

impl McOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        McOptions { n, stream: RngStream::new(seed), cap: DEFAULT_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_stream(mut self, stream: RngStream) -> Self {
        self.stream = stream;
        self
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::usage("number of samples must be positive"));
        }
        if self.cap == 0 {
            return Err(Error::usage("cap must be at least 1"));
        }
        Ok(())
    }
}

/// How an estimator evaluates probabilities.
#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    /// Exact enumeration on a finite substrate. The substrate must contain
    /// every kernel edge of the region it is used with.
    Exact(&'a FiniteGraph),
    MonteCarlo(McOptions),
}

/// Mean of per-sample values, with capped samples (`None`) excluded and the
/// censoring rate checked.
pub(crate) fn censored_mean(values: &[Option<f64>]) -> Result<Estimate> {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    let rate = check_censoring(values.len() - kept.len(), values.len())?;
    Ok(Estimate::from_samples(&kept).with_censoring(rate))
}

/// `P_β[x ↔^region y]`.
pub fn two_point(model: &SpreadOutModel, region: &Region, x: &Point, y: &Point, method: Method) -> Result<Estimate> {
    if x.dim() != model.dim() || y.dim() != model.dim() {
        return Err(Error::usage("point dimension does not match the model"));
    }
    if !region.contains(x) || !region.contains(y) {
        return Err(Error::usage("both points must lie in the region"));
    }
    if x == y {
        return Ok(Estimate::exact(1.0));
    }
    match method {
        Method::Exact(g) => {
            let (xi, yi) = (g.require(x)?, g.require(y)?);
            Ok(Estimate::exact(connect_prob_mask(g, &g.region_mask(region), xi, yi)?))
        }
        Method::MonteCarlo(o) => {
            o.check()?;
            let explorer = Explorer::new(model)?;
            let target = region.wrap(*y);
            let values = par_samples(o.n, o.stream, |_, rng| {
                explorer
                    .cluster(region, *x, o.cap, rng)
                    .map(|(sites, capped)| (!capped).then(|| sites.contains(&target) as u8 as f64))
            });
            censored_mean(&values.into_iter().collect::<Result<Vec<_>>>()?)
        }
    }
}

/// `φ_β(S) = Σ_{y∈S, z∉S} P_β[0 ↔^S y] p_{yz}`. The exterior factor is
/// counted geometrically, so the Monte Carlo version is a conditional
/// expectation of the exact sum given the cluster.
pub fn phi(model: &SpreadOutModel, region: &Region, method: Method) -> Result<Estimate> {
    let o = model.origin();
    if !region.contains(&o) {
        return Err(Error::usage("the region must contain the origin"));
    }
    let p = model.p_beta();
    let l = model.range();
    match method {
        Method::Exact(g) => {
            let mask = g.region_mask(region);
            if let Some(len) = region.dense_len(model.dim()) {
                if mask.iter().filter(|&&m| m).count() != len {
                    return Err(Error::usage("the substrate does not contain every site of the region"));
                }
            }
            let oi = g.require(&o)?;
            let t = exact_tables(g, &[&mask])?.remove(0);
            let total = (0..g.n_sites())
                .filter(|&y| mask[y])
                .map(|y| t.get(oi, y) * region.exterior_count(&g.site(y), l) as f64 * p)
                .sum();
            Ok(Estimate::exact(total))
        }
        Method::MonteCarlo(opts) => {
            opts.check()?;
            if p == 0.0 {
                return Ok(Estimate::exact(0.0));
            }
            let explorer = Explorer::new(model)?;
            let values = par_samples(opts.n, opts.stream, |_, rng| {
                explorer.cluster(region, o, opts.cap, rng).map(|(sites, capped)| {
                    (!capped).then(|| sites.iter().map(|y| region.exterior_count(y, l) as f64).sum::<f64>() * p)
                })
            });
            censored_mean(&values.into_iter().collect::<Result<Vec<_>>>()?)
        }
    }
}

/// `ψ_β(H_n) = Σ_{x∈(∂H_n)^*} P_β[0 ↔^{H_n} x]`; with `k = Some(k)` only
/// the terms with `|x| <= k` are kept (`ψ^{[k]}`).
pub fn psi_restricted(model: &SpreadOutModel, n: i64, k: Option<i64>, method: Method) -> Result<Estimate> {
    if n < 0 {
        return Err(Error::usage("n must be nonnegative"));
    }
    let region = Region::HalfSpace { shift: n };
    let o = model.origin();
    let counts = |x: &Point| x.get(0) == -n && !x.is_origin() && k.is_none_or(|k| x.linf() <= k);
    match method {
        Method::Exact(g) => {
            let mask = g.region_mask(&region);
            let oi = g.require(&o)?;
            let t = exact_tables(g, &[&mask])?.remove(0);
            Ok(Estimate::exact((0..g.n_sites()).filter(|&x| counts(&g.site(x))).map(|x| t.get(oi, x)).sum()))
        }
        Method::MonteCarlo(opts) => {
            opts.check()?;
            if model.p_beta() == 0.0 {
                return Ok(Estimate::exact(0.0));
            }
            let explorer = Explorer::new(model)?;
            let values = par_samples(opts.n, opts.stream, |_, rng| {
                explorer
                    .cluster(&region, o, opts.cap, rng)
                    .map(|(sites, capped)| (!capped).then(|| sites.iter().filter(|x| counts(x)).count() as f64))
            });
            censored_mean(&values.into_iter().collect::<Result<Vec<_>>>()?)
        }
    }
}

pub fn psi(model: &SpreadOutModel, n: i64, method: Method) -> Result<Estimate> {
    psi_restricted(model, n, None, method)
}

pub fn psi_k(model: &SpreadOutModel, n: i64, k: i64, method: Method) -> Result<Estimate> {
    psi_restricted(model, n, Some(k), method)
}

/// `β₀ = -|Λ_L^*| log(1 - 1/|Λ_L^*|)`, the point where `φ_β({0}) = 1`.
pub fn beta0(d: usize, l: i64) -> Result<f64> {
    let m = SpreadOutModel::new(d, l, 0.0)?;
    let n = m.neighborhood_size();
    Ok(-n * (-1.0 / n).ln_1p())
}

/// `β₀` by bisection of `φ_β({0}) - 1 = |Λ_L^*| p_β - 1` on `[0, 2]`.
pub fn beta0_bisection(d: usize, l: i64, tol: f64) -> Result<f64> {
    let m = SpreadOutModel::new(d, l, 0.0)?;
    let f = |b: f64| -> Result<f64> { Ok(m.with_beta(b)?.p_beta() * m.neighborhood_size() - 1.0) };
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    if f(hi)? < 0.0 {
        return Err(Error::Internal("φ_2({0}) < 1".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `c(d) = |log(1 - 1/(4d²))| / (2 log 2)`.
pub fn lemma27_constant(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::usage("d must be at least 1"));
    }
    let d = d as f64;
    Ok((-1.0 / (4.0 * d * d)).ln_1p().abs() / (2.0 * std::f64::consts::LN_2))
}

/// `χ(β) = E|C(0)|` from cluster sizes in the full lattice.
pub fn susceptibility(model: &SpreadOutModel, opts: McOptions) -> Result<Estimate> {
    opts.check()?;
    if model.p_beta() == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    let explorer = Explorer::new(model)?;
    let values = par_samples(opts.n, opts.stream, |_, rng| {
        explorer
            .cluster(&Region::Full, model.origin(), opts.cap, rng)
            .map(|(s, capped)| (!capped).then_some(s.len() as f64))
    });
    censored_mean(&values.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Correlation length from the decay of `G(n e_1)` over the fit range.
///
/// `G(n e_1)` is estimated by counting the cluster sites among the `2d`
/// points `±n e_i`, which all share the same two-point value by symmetry.
/// The returned estimate is `ξ = -1 / slope` of `log G(n e_1)` against `n`,
/// with the fit's slope error propagated.
pub fn correlation_length(
    model: &SpreadOutModel,
    fit: std::ops::RangeInclusive<i64>,
    opts: McOptions,
) -> Result<Estimate> {
    opts.check()?;
    if model.p_beta() == 0.0 {
        return Err(Error::Undefined("the correlation length is not defined at β = 0".into()));
    }
    let ns: Vec<i64> = fit.clone().filter(|&n| n >= 1).collect();
    if ns.len() < 2 {
        return Err(Error::usage("the fit range needs at least two positive distances"));
    }
    let d = model.dim();
    let explorer = Explorer::new(model)?;
    let rows = par_samples(opts.n, opts.stream, |_, rng| {
        explorer.cluster(&Region::Full, model.origin(), opts.cap, rng).map(|(sites, capped)| {
            (!capped).then(|| {
                let mut counts = vec![0.0; ns.len()];
                for s in &sites {
                    let nz: Vec<i64> = s.coords().iter().filter(|&&c| c != 0).map(|&c| c as i64).collect();
                    if nz.len() == 1 {
                        if let Some(i) = ns.iter().position(|&n| n == nz[0].abs()) {
                            counts[i] += 1.0 / (2 * d) as f64;
                        }
                    }
                }
                counts
            })
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let kept: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let rate = check_censoring(rows.len() - kept.len(), rows.len())?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let col: Vec<f64> = kept.iter().map(|r| r[i]).collect();
        let e = Estimate::from_samples(&col);
        if e.value > 0.0 {
            x.push(n as f64);
            y.push(e);
        }
    }
    if x.len() < 2 {
        return Err(Error::Undefined("two-point function vanished on the fit range".into()));
    }
    let w: Vec<f64> = y.iter().map(|e| (e.value / e.std_error.max(1e-300)).powi(2)).collect();
    let ly: Vec<f64> = y.iter().map(|e| e.value.ln()).collect();
    let f = crate::stats::weighted_line_fit(&x, &ly, &w)?;
    if f.slope >= 0.0 {
        return Err(Error::Undefined("two-point function does not decay on the fit range".into()));
    }
    let xi = -1.0 / f.slope;
    Ok(Estimate {
        value: xi,
        std_error: f.slope_se / (f.slope * f.slope),
        n_samples: kept.len(),
        truncation: Some(format!("fit n in [{}, {}]", fit.start(), fit.end())),
        censored_rate: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::graph::box_sites;

    fn p1(x: i64) -> Point {
        Point::new(&[x]).unwrap()
    }

    #[test]
    fn two_point_trivial_cases() {
        let m = SpreadOutModel::new(2, 1, 0.0).unwrap();
        let o = m.origin();
        let x = Point::new(&[1, 0]).unwrap();
        let mc = Method::MonteCarlo(McOptions::new(100, 1));
        assert_eq!(two_point(&m, &Region::Full, &o, &o, mc).unwrap().value, 1.0);
        assert_eq!(two_point(&m, &Region::Full, &o, &x, mc).unwrap().value, 0.0);
    }

    #[test]
    fn two_point_three_site_substrate() {
        let m = SpreadOutModel::new(1, 2, 1.0).unwrap();
        let g = FiniteGraph::induced(&m, vec![p1(0), p1(1), p1(2)]).unwrap();
        let p = m.p_beta();
        let e = two_point(&m, &Region::Full, &p1(0), &p1(2), Method::Exact(&g)).unwrap();
        assert!((e.value - (p + (1.0 - p) * p * p)).abs() < 1e-15);
        assert!(e.is_exact());
    }

    #[test]
    fn phi_closed_forms() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        let single = Region::cube(2, 0);
        let g = FiniteGraph::induced(&m, box_sites(2, 0)).unwrap();
        let e = phi(&m, &single, Method::Exact(&g)).unwrap();
        assert!((e.value - 8.0 * (1.0 - (-0.125f64).exp())).abs() < 1e-12);
        assert!((e.value - 0.940025).abs() < 1e-6);
        let mc = phi(&m, &single, Method::MonteCarlo(McOptions::new(10, 3))).unwrap();
        assert!((mc.value - e.value).abs() < 1e-12 && mc.std_error < 1e-12);
        for d in 1..=7 {
            for l in 1..=8 {
                let b0 = beta0(d, l).unwrap();
                let m = SpreadOutModel::new(d, l, b0).unwrap();
                assert!((m.neighborhood_size() * m.p_beta() - 1.0).abs() < 1e-10);
            }
        }
        let z = SpreadOutModel::new(3, 2, 0.0).unwrap();
        assert_eq!(phi(&z, &Region::cube(3, 4), Method::MonteCarlo(McOptions::new(10, 1))).unwrap().value, 0.0);
    }

    #[test]
    fn phi_requires_full_substrate() {
        let m = SpreadOutModel::new(1, 1, 1.0).unwrap();
        let g = FiniteGraph::induced(&m, box_sites(1, 1)).unwrap();
        assert!(phi(&m, &Region::cube(1, 2), Method::Exact(&g)).is_err());
    }

    #[test]
    fn beta0_values() {
        assert!((beta0(2, 1).unwrap() - 1.068251).abs() < 1e-6);
        assert!((beta0(7, 1).unwrap() - 1.000229).abs() < 1e-6);
        for d in 1..=7 {
            for l in 1..=8 {
                let a = beta0(d, l).unwrap();
                let b = beta0_bisection(d, l, 1e-13).unwrap();
                assert!((a - b).abs() < 1e-10, "d={d} L={l}");
                assert!((1.0..=2.0).contains(&a));
            }
        }
    }

    #[test]
    fn lemma27_values() {
        assert!((lemma27_constant(1).unwrap() - 0.207519).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for d in 1..20 {
            let c = lemma27_constant(d).unwrap();
            assert!(c > 0.0 && c < prev);
            prev = c;
        }
        assert!(lemma27_constant(0).is_err());
    }

    #[test]
    fn susceptibility_at_zero_and_monotone() {
        let m = SpreadOutModel::new(3, 1, 0.0).unwrap();
        assert_eq!(susceptibility(&m, McOptions::new(10, 1)).unwrap().value, 1.0);
        let opts = McOptions::new(5000, 8);
        let mut prev = 0.0;
        for b in [0.2, 0.5, 0.8] {
            let chi = susceptibility(&m.with_beta(b).unwrap(), opts).unwrap().value;
            assert!(chi >= prev);
            prev = chi;
        }
    }

    #[test]
    fn correlation_length_errors_and_value() {
        let m = SpreadOutModel::new(2, 1, 0.0).unwrap();
        assert!(matches!(correlation_length(&m, 1..=3, McOptions::new(10, 1)), Err(Error::Undefined(_))));
        let m = SpreadOutModel::new(1, 1, 1.0).unwrap();
        // d = 1, L = 1: G(n) = p^n exactly, so ξ = -1/log p.
        let xi = correlation_length(&m, 1..=4, McOptions::new(200_000, 2)).unwrap();
        let exact = -1.0 / m.p_beta().ln();
        assert!(xi.z_score(exact) < 4.0, "{xi:?} vs {exact}");
    }

    #[test]
    fn psi_small_beta() {
        let m = SpreadOutModel::new(2, 1, 0.05).unwrap();
        let p = m.p_beta();
        // Truncated strip of H_0: x_1 in [0, 1], x_2 in [-2, 2].
        let mut sites = Vec::new();
        for a in 0..=1 {
            for b in -2..=2 {
                sites.push(Point::new(&[a, b]).unwrap());
            }
        }
        let g = FiniteGraph::induced(&m, sites).unwrap();
        assert!(g.n_edges() <= 30);
        let exact = psi(&m, 0, Method::Exact(&g)).unwrap().value;
        // Leading order 2p; two-step paths contribute O(p^2).
        assert!((exact - 2.0 * p).abs() < 20.0 * p * p, "{exact} vs {}", 2.0 * p);
        let mc = psi(&m, 0, Method::MonteCarlo(McOptions::new(100_000, 5))).unwrap();
        assert!(mc.z_score(exact) < 4.0);
        // Longer paths leave the strip only at O(p^3), far below 1e-4.
        let long = profile::halfspace_profile(&m, 0, &[], &[], McOptions::new(16_000_000, 6)).unwrap();
        let e = &long.psi[0];
        assert!((e.value - exact).abs() < 1e-4, "{e:?} vs {exact}");
        let k0 = psi_k(&m, 0, 1, Method::Exact(&g)).unwrap().value;
        assert!(k0 <= exact);
        let zero = m.with_beta(0.0).unwrap();
        assert_eq!(psi(&zero, 0, Method::MonteCarlo(McOptions::new(10, 1))).unwrap().value, 0.0);
        assert_eq!(psi(&zero, 3, Method::MonteCarlo(McOptions::new(10, 1))).unwrap().value, 0.0);
    }
}
