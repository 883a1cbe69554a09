//! The rescaled step law
//! `μ(v) = 1{v ∉ Λ_{m-1}} / φ_β(Λ_{m-1}) · Σ_{w ∈ Λ_{m-1}} P_β[0 ↔^{Λ_{m-1}} w] p_{wv}`.
//!
//! The restricted two-point function is enumerated exactly on the box
//! substrate, or estimated from clusters explored inside the box and
//! averaged over lattice symmetries, which makes the law exactly symmetric
//! up to rounding.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::estimators::McOptions;
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::explore::Explorer;
use crate::percolation::graph::{box_sites, connect_prob_mask, FiniteGraph};
use crate::randwalk::{StepDistribution, StepKind};
use crate::rng::par_samples;
use crate::stats::{check_censoring, kahan_sum};

/// Largest tolerated deviation of the total mass from `φ_β(Λ_{m-1})`.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub enum RescaledMethod {
    /// Exact enumeration on the box `Λ_{m-1}`; feasible for tiny boxes only.
    Exact,
    MonteCarlo(McOptions),
}

/// `P_β[0 ↔^{Λ_{m-1}} w]` for every `w ∈ Λ_{m-1}`, in `box_sites` order.
fn restricted_two_point(model: &SpreadOutModel, r: i64, sites: &[Point], method: RescaledMethod) -> Result<Vec<f64>> {
    let region = Region::cube(model.dim(), r);
    match method {
        RescaledMethod::Exact => {
            let g = FiniteGraph::box_substrate(model, r)?;
            let mask = g.region_mask(&region);
            let o = g.require(&model.origin())?;
            sites
                .iter()
                .map(|w| if w.is_origin() { Ok(1.0) } else { connect_prob_mask(&g, &mask, o, g.require(w)?) })
                .collect()
        }
        RescaledMethod::MonteCarlo(opts) => {
            opts.check()?;
            let explorer = Explorer::new(model)?;
            let samples = par_samples(opts.n, opts.stream, |_, rng| {
                explorer.cluster(&region, model.origin(), opts.cap, rng).map(|(s, capped)| (!capped).then_some(s))
            });
            let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
            let censored = samples.iter().filter(|s| s.is_none()).count();
            check_censoring(censored, samples.len())?;
            let kept = (samples.len() - censored) as f64;
            let mut by_class: FxHashMap<u128, f64> = FxHashMap::default();
            for s in samples.iter().flatten() {
                for x in s {
                    *by_class.entry(x.canonical().key()).or_insert(0.0) += 1.0;
                }
            }
            Ok(sites
                .iter()
                .map(|w| {
                    let c = w.canonical();
                    by_class.get(&c.key()).map_or(0.0, |n| n / (kept * c.orbit_size() as f64))
                })
                .collect())
        }
    }
}

/// Builds `μ_{m,L,β}`. Fails with an undefined-quantity error when
/// `φ_β(Λ_{m-1}) = 0` (that is, at `β = 0`).
pub fn rescaled_step(model: &SpreadOutModel, m: i64, method: RescaledMethod) -> Result<StepDistribution> {
    if m < 1 {
        return Err(Error::usage("m must be at least 1"));
    }
    let d = model.dim();
    let l = model.range();
    let p = model.p_beta();
    if p == 0.0 {
        return Err(Error::Undefined("φ_β(Λ_{m-1}) = 0 at β = 0; the rescaled law is undefined".into()));
    }
    let r = m - 1;
    let sites = box_sites(d, r);
    let g = restricted_two_point(model, r, &sites, method)?;
    let offsets = model.offsets()?;
    let mut mass: FxHashMap<u128, (Point, f64)> = FxHashMap::default();
    for (w, &gw) in sites.iter().zip(&g) {
        if gw == 0.0 {
            continue;
        }
        for u in &offsets {
            let v = *w + *u;
            if v.linf() > r {
                mass.entry(v.key()).or_insert((v, 0.0)).1 += gw * p;
            }
        }
    }
    // Normaliser computed independently through the exterior counts.
    let region = Region::cube(d, r);
    let phi = kahan_sum(sites.iter().zip(&g).map(|(w, &gw)| gw * p * region.exterior_count(w, l) as f64));
    let mut masses: Vec<(Point, f64)> = mass.into_values().collect();
    masses.sort_by_key(|(v, _)| v.key());
    let total = kahan_sum(masses.iter().map(|(_, w)| *w));
    if ((total - phi) / phi).abs() > NORMALIZATION_TOL {
        return Err(Error::Internal(format!("rescaled law mass {total} differs from φ = {phi}")));
    }
    for e in &mut masses {
        e.1 /= phi;
    }
    let beta = model.beta();
    StepDistribution::build(StepKind::Rescaled { m, range: l, beta }, d, masses, true)
}
