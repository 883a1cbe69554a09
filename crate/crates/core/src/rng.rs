//! Counter-based, hierarchical random streams.
//!
//! A stream is identified by a master seed and a path of indices
//! (experiment → point → sample). The key of a child is a pure function of
//! the parent key and the index, so every sample owns its randomness no
//! matter which worker evaluates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    key: u64,
}

/// SplitMix64 finalizer: a bijective mixer with full avalanche.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { key: mix(seed ^ 0x5851_f42d_4c95_7f2d) }
    }

    /// Substream number `index` of `self`.
    #[inline]
    pub fn child(&self, index: u64) -> Self {
        RngStream { key: mix(self.key.wrapping_add(mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))) }
    }

    /// Substream named by a string label, for readable experiment paths.
    pub fn named(&self, label: &str) -> Self {
        let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.child(h)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

/// Evaluates `f(i, rng_i)` for `i in 0..n`, each on substream `i` of
/// `stream`, in parallel. Results come back in index order, so any fold over
/// them is independent of the worker count.
pub fn par_samples<T, F>(n: usize, stream: RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            f(i, &mut rng)
        })
        .collect()
}

/// Like [`par_samples`] but hands the results to `consume` block by block,
/// in index order, so that large sample counts need not be held in memory.
pub fn par_blocks<T, F, C>(n: usize, stream: RngStream, block: usize, f: F, mut consume: C)
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
    C: FnMut(usize, T),
{
    let block = block.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let out: Vec<T> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.child(i as u64).rng();
                f(i, &mut rng)
            })
            .collect();
        for (k, t) in out.into_iter().enumerate() {
            consume(start + k, t);
        }
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn children_are_distinct_and_reproducible() {
        let s = RngStream::new(7);
        let mut keys: Vec<u64> = (0..10_000).map(|i| s.child(i).key()).collect();
        assert_eq!(s.child(3), RngStream::new(7).child(3));
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 10_000);
        assert_ne!(s.child(1).child(2), s.child(2).child(1));
    }

    #[test]
    fn par_samples_independent_of_pool_size() {
        let s = RngStream::new(11);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| par_samples(1000, s, |_, r| r.random::<u64>()))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn streams_look_uniform() {
        let s = RngStream::new(1);
        let n = 200_000;
        let mean: f64 = par_samples(n, s, |_, r| r.random::<f64>()).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
    }
}
