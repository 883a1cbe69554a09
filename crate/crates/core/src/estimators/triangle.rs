//! Truncated triangle diagram
//! `∇_R = Σ_{x,z ∈ Λ_R} G(x) G(z) G(x - z)`.
//!
//! Two of the three factors are realised by independent clusters `C_1, C_2`
//! of the origin, the third by a symmetrised two-point table `Ĝ` built from
//! an independent sample:
//! `∇_R = E[Σ_{x ∈ C_1 ∩ Λ_R} Σ_{z ∈ C_2 ∩ Λ_R} Ĝ(x - z)]`.
//! Every window is evaluated from the same pairs, so the increments between
//! windows are estimated with strongly correlated errors. Standard errors
//! come from a delete-one-group jackknife that removes a group of pairs and
//! a group of table samples together.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::green::SymmetricGreen;
use crate::estimators::McOptions;
use crate::lattice::{Region, SpreadOutModel};
use crate::percolation::explore::Explorer;
use crate::rng::par_samples;
use crate::stats::{check_censoring, jackknife, Estimate};

const GROUPS: usize = 20;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleOptions {
    /// Increasing window radii `R`.
    pub windows: Vec<i64>,
    /// Number of independent cluster pairs.
    pub pairs: usize,
    /// Samples (and seed stream) for the two-point table `Ĝ`.
    pub table: McOptions,
}

impl TriangleOptions {
    pub fn new(windows: Vec<i64>, pairs: usize, table_samples: usize, seed: u64) -> Self {
        TriangleOptions { windows, pairs, table: McOptions::new(table_samples, seed) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleReport {
    pub beta: f64,
    /// `(R, ∇_R)`.
    pub values: Vec<(i64, Estimate)>,
    /// `∇_{R_{j+1}} - ∇_{R_j}` for consecutive windows.
    pub increments: Vec<Estimate>,
    /// `(∇_{R_{j+2}} - ∇_{R_{j+1}}) / (∇_{R_{j+1}} - ∇_{R_j})`.
    pub increment_ratios: Vec<Estimate>,
    pub censored_rate: f64,
}

/// Per-band sums of one pair: `hits` counts `x = z` (where `Ĝ = 1`), and
/// `by_group[g]` sums the group-`g` table weights of `x - z ≠ 0`.
#[derive(Clone, Debug)]
struct PairSums {
    hits: Vec<f64>,
    by_group: Vec<[f64; GROUPS]>,
}

pub fn triangle(model: &SpreadOutModel, opts: &TriangleOptions) -> Result<TriangleReport> {
    let w = &opts.windows;
    if w.is_empty() || w[0] < 1 || w.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::usage("windows must be increasing radii >= 1"));
    }
    if opts.pairs < GROUPS {
        return Err(Error::usage(format!("at least {GROUPS} cluster pairs are needed")));
    }
    opts.table.check()?;
    let r_max = *w.last().unwrap();
    let mut values = Vec::new();
    if model.p_beta() == 0.0 {
        for &r in w {
            values.push((r, Estimate::exact(1.0)));
        }
        let zero = || Estimate::exact(0.0);
        return Ok(TriangleReport {
            beta: model.beta(),
            increments: (1..w.len()).map(|_| zero()).collect(),
            increment_ratios: Vec::new(),
            values,
            censored_rate: 0.0,
        });
    }
    if 2 * r_max > i16::MAX as i64 / 2 {
        return Err(Error::capacity("triangle window exceeds the coordinate range"));
    }
    let table = SymmetricGreen::sample(model, 2 * r_max, GROUPS, opts.table)?;
    let sizes = table.group_sizes().to_vec();
    let n_table: usize = sizes.iter().sum();
    if n_table == 0 {
        return Err(Error::Undefined("every table sample was censored".into()));
    }
    let bands = w.len();
    let explorer = Explorer::new(model)?;
    // Per-class weights `count_g / orbit`, cached per pair by canonical key.
    let class_weight = |u: &crate::lattice::Point, cache: &mut FxHashMap<u128, Option<[f64; GROUPS]>>| {
        let c = u.canonical();
        let k = c.key();
        if let Some(v) = cache.get(&k) {
            return *v;
        }
        let v = table.class_counts(k).map(|cnt| {
            let inv = 1.0 / c.orbit_size() as f64;
            let mut a = [0.0; GROUPS];
            for (g, &x) in cnt.iter().enumerate() {
                a[g] = x as f64 * inv;
            }
            a
        });
        cache.insert(k, v);
        v
    };
    let band_of = |r: i64| w.iter().position(|&rr| r <= rr);
    let stream = opts.table.stream.named("pairs");
    let per_pair = par_samples(opts.pairs, stream, |_, rng| -> Result<Option<PairSums>> {
        let (a, ca) = explorer.cluster(&Region::Full, model.origin(), opts.table.cap, rng)?;
        let (b, cb) = explorer.cluster(&Region::Full, model.origin(), opts.table.cap, rng)?;
        if ca || cb {
            return Ok(None);
        }
        let a: Vec<_> = a.into_iter().filter(|x| x.linf() <= r_max).collect();
        let b: Vec<_> = b.into_iter().filter(|x| x.linf() <= r_max).collect();
        let mut sums = PairSums { hits: vec![0.0; bands], by_group: vec![[0.0; GROUPS]; bands] };
        let mut cache = FxHashMap::default();
        for x in &a {
            let rx = x.linf();
            for z in &b {
                let band = band_of(rx.max(z.linf())).expect("both points lie in the largest window");
                let u = *x - *z;
                if u.is_origin() {
                    sums.hits[band] += 1.0;
                } else if let Some(v) = class_weight(&u, &mut cache) {
                    let acc = &mut sums.by_group[band];
                    for g in 0..GROUPS {
                        acc[g] += v[g];
                    }
                }
            }
        }
        Ok(Some(sums))
    });
    let per_pair = per_pair.into_iter().collect::<Result<Vec<_>>>()?;
    let censored = per_pair.iter().filter(|p| p.is_none()).count();
    let rate = check_censoring(censored, per_pair.len())?.max(table.censored_rate);
    // Aggregate by pair group.
    let n_pairs = per_pair.len();
    let mut kept = [0usize; GROUPS];
    let mut hits = vec![vec![0.0; bands]; GROUPS];
    let mut grp = vec![vec![[0.0; GROUPS]; bands]; GROUPS];
    for (i, p) in per_pair.iter().enumerate() {
        let pg = i * GROUPS / n_pairs;
        let Some(p) = p else { continue };
        kept[pg] += 1;
        for band in 0..bands {
            hits[pg][band] += p.hits[band];
            for (acc, v) in grp[pg][band].iter_mut().zip(&p.by_group[band]) {
                *acc += v;
            }
        }
    }
    // ∇ at window index `wi` with group `skip` removed from both samples.
    let nabla = |wi: usize, skip: Option<usize>| -> f64 {
        let n_tab = (n_table - skip.map_or(0, |s| sizes[s])) as f64;
        let mut total = 0.0;
        let mut count = 0usize;
        for pg in (0..GROUPS).filter(|&g| Some(g) != skip) {
            count += kept[pg];
            for band in 0..=wi {
                total += hits[pg][band];
                let s: f64 = (0..GROUPS).filter(|&g| Some(g) != skip).map(|g| grp[pg][band][g]).sum();
                total += s / n_tab;
            }
        }
        total / count as f64
    };
    let n_kept: usize = kept.iter().sum();
    let est = |f: &dyn Fn(Option<usize>) -> f64| {
        let (v, se) = jackknife(GROUPS, f);
        Estimate { value: v, std_error: se, n_samples: n_kept, truncation: None, censored_rate: rate }
    };
    for (wi, &r) in w.iter().enumerate() {
        values.push((r, est(&|s| nabla(wi, s)).with_truncation(format!("x,z in box of radius {r}"))));
    }
    let increments = (1..bands)
        .map(|j| est(&|s| nabla(j, s) - nabla(j - 1, s)).with_truncation(format!("R {} -> {}", w[j - 1], w[j])))
        .collect();
    let increment_ratios =
        (2..bands)
            .map(|j| {
                est(&|s| (nabla(j, s) - nabla(j - 1, s)) / (nabla(j - 1, s) - nabla(j - 2, s)))
                    .with_truncation(format!("R {} -> {} over {} -> {}", w[j - 1], w[j], w[j - 2], w[j - 1]))
            })
            .collect();
    Ok(TriangleReport { beta: model.beta(), values, increments, increment_ratios, censored_rate: rate })
}
