//! Full-lattice two-point tables estimated from cluster samples and
//! averaged over the symmetry group of `Z^d` (coordinate permutations and
//! reflections), which leaves `G` invariant.

use rustc_hash::FxHashMap;

use crate::error::Result;
use crate::estimators::McOptions;
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::explore::Explorer;
use crate::rng::par_samples;
use crate::stats::check_censoring;

/// `Ĝ(u) ≈ P_β[0 ↔ u]` for `|u|∞ <= radius`, split into sample groups so
/// that delete-one-group statistics can be formed.
#[derive(Clone, Debug)]
pub struct SymmetricGreen {
    counts: FxHashMap<u128, Vec<u32>>,
    group_sizes: Vec<usize>,
    radius: i64,
    pub censored_rate: f64,
}

impl SymmetricGreen {
    /// Explores `opts.n` clusters of the origin and tallies their sites by
    /// symmetry class. Capped samples are dropped.
    pub fn sample(model: &SpreadOutModel, radius: i64, groups: usize, opts: McOptions) -> Result<Self> {
        opts.check()?;
        let groups = groups.max(1);
        let explorer = Explorer::new(model)?;
        let per_sample = par_samples(opts.n, opts.stream, |_, rng| {
            explorer.cluster(&Region::Full, model.origin(), opts.cap, rng).map(|(sites, capped)| {
                (!capped).then(|| {
                    let mut keys: Vec<u128> =
                        sites.iter().filter(|s| s.linf() <= radius).map(|s| s.canonical().key()).collect();
                    keys.sort_unstable();
                    keys
                })
            })
        });
        let per_sample = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
        let censored = per_sample.iter().filter(|s| s.is_none()).count();
        let censored_rate = check_censoring(censored, opts.n)?;
        let mut counts: FxHashMap<u128, Vec<u32>> = FxHashMap::default();
        let mut group_sizes = vec![0usize; groups];
        for (i, keys) in per_sample.iter().enumerate() {
            let g = i * groups / opts.n;
            if let Some(keys) = keys {
                group_sizes[g] += 1;
                for k in keys {
                    counts.entry(*k).or_insert_with(|| vec![0; groups])[g] += 1;
                }
            }
        }
        Ok(SymmetricGreen { counts, group_sizes, radius, censored_rate })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn n_kept(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Per-group hit counts of the symmetry class with canonical key `key`.
    #[inline]
    pub(crate) fn class_counts(&self, key: u128) -> Option<&[u32]> {
        self.counts.get(&key).map(|v| v.as_slice())
    }

    /// Estimate of `G(u)` using every group except `skip`.
    pub fn get_without(&self, u: &Point, skip: Option<usize>) -> f64 {
        if u.is_origin() {
            return 1.0;
        }
        if u.linf() > self.radius {
            return 0.0;
        }
        let c = u.canonical();
        let Some(v) = self.counts.get(&c.key()) else { return 0.0 };
        let (hits, n) = v
            .iter()
            .zip(&self.group_sizes)
            .enumerate()
            .filter(|(g, _)| Some(*g) != skip)
            .fold((0u64, 0usize), |(h, n), (_, (&c, &s))| (h + c as u64, n + s));
        if n == 0 {
            return 0.0;
        }
        hits as f64 / (n as f64 * c.orbit_size() as f64)
    }

    #[inline]
    pub fn get(&self, u: &Point) -> f64 {
        self.get_without(u, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_beta_is_delta() {
        let m = SpreadOutModel::new(3, 1, 0.0).unwrap();
        let t = SymmetricGreen::sample(&m, 3, 4, McOptions::new(100, 1)).unwrap();
        assert_eq!(t.get(&m.origin()), 1.0);
        assert_eq!(t.get(&Point::new(&[1, 0, 0]).unwrap()), 0.0);
    }

    #[test]
    fn one_dimensional_values() {
        // d = 1, L = 1: G(n) = p^{|n|}.
        let m = SpreadOutModel::new(1, 1, 1.2).unwrap();
        let n = 100_000;
        let t = SymmetricGreen::sample(&m, 5, 1, McOptions::new(n, 4)).unwrap();
        let p = m.p_beta();
        for k in 1..=3 {
            let exact = p.powi(k);
            let se = (exact / (2.0 * n as f64)).sqrt();
            let x = Point::new(&[-(k as i64)]).unwrap();
            assert!((t.get(&x) - exact).abs() < 4.0 * se, "k={k}");
        }
    }
}
