//! Cluster exploration with lazily sampled edges.
//!
//! Edges are sampled only when the breadth-first search first needs them:
//! when a site is popped, the edges to its not-yet-reached neighbours are
//! drawn. An edge towards a site already in the cluster never influences the
//! cluster, so the sampled sites follow the law of the open cluster exactly.
//! Open neighbours are located with geometric skips over the offset table of
//! `Λ_L^*`, so the cost per site is the number of open edges, not `|Λ_L^*|`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::graph::FiniteGraph;
use crate::rng::RngStream;

/// Default site cap of an exploration.
pub const DEFAULT_CAP: usize = 1_000_000;

/// One sampled edge of a recorded exploration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TouchedEdge {
    pub a: Point,
    pub b: Point,
    pub open: bool,
}

impl TouchedEdge {
    /// Orientation-free key of the edge.
    pub fn key(&self) -> (u128, u128) {
        let (x, y) = (self.a.key(), self.b.key());
        (x.min(y), x.max(y))
    }
}

/// The open cluster of `origin` inside `region`, with the record of every
/// sampled edge when recording was requested.
#[derive(Clone, Debug)]
pub struct ClusterSample {
    pub origin: Point,
    pub region: Region,
    pub sites: Vec<Point>,
    pub touched_edges: Vec<TouchedEdge>,
    pub capped: bool,
}

impl ClusterSample {
    pub fn contains(&self, x: &Point) -> bool {
        self.sites.contains(x)
    }
}

/// A cluster grown through an increasing family of regions `S_0 ⊆ S_1 ⊆ …`
/// with a single configuration. `joined[i]` is the first level whose
/// restricted cluster contains `sites[i]`, so the cluster of level `k` is
/// `{sites[i] : joined[i] <= k}`.
#[derive(Clone, Debug, Default)]
pub struct NestedCluster {
    pub sites: Vec<Point>,
    pub joined: Vec<u32>,
    /// Level at which the site cap was hit; levels below it are exact.
    pub capped_at: Option<u32>,
}

impl NestedCluster {
    /// Whether level `k` was fully explored.
    pub fn level_complete(&self, k: u32) -> bool {
        self.capped_at.is_none_or(|c| k < c)
    }

    pub fn size_at(&self, k: u32) -> usize {
        self.joined.iter().filter(|&&j| j <= k).count()
    }
}

/// Nested region families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Boxes `Λ_k`; a site enters at level `|x|∞`.
    Boxes,
    /// Half-spaces `H_k`; a site enters at level `max(0, -x_1)`.
    HalfSpaces,
}

impl Family {
    #[inline]
    pub fn level(&self, x: &Point) -> i64 {
        match self {
            Family::Boxes => x.linf(),
            Family::HalfSpaces => (-x.get(0)).max(0),
        }
    }
}

/// Reusable cluster sampler for one model.
#[derive(Clone, Debug)]
pub struct Explorer {
    model: SpreadOutModel,
    offsets: Arc<Vec<Point>>,
    geometric: Option<Geometric>,
}

impl Explorer {
    pub fn new(model: &SpreadOutModel) -> Result<Self> {
        let p = model.p_beta();
        let geometric = if p > 0.0 {
            Some(Geometric::new(p).map_err(|e| Error::Internal(format!("geometric law: {e}")))?)
        } else {
            None
        };
        Ok(Explorer { model: *model, offsets: Arc::new(model.offsets()?), geometric })
    }

    pub fn model(&self) -> &SpreadOutModel {
        &self.model
    }

    /// Calls `f` with every open offset around one site.
    #[inline]
    fn for_each_open<R: Rng + ?Sized>(&self, rng: &mut R, mut f: impl FnMut(Point)) {
        let Some(geo) = &self.geometric else { return };
        let n = self.offsets.len() as u64;
        let mut idx = 0u64;
        loop {
            idx = idx.saturating_add(geo.sample(rng));
            if idx >= n {
                return;
            }
            f(self.offsets[idx as usize]);
            idx += 1;
        }
    }

    fn check_region(&self, region: &Region, origin: &Point) -> Result<()> {
        if origin.dim() != self.model.dim() {
            return Err(Error::usage("origin dimension does not match the model"));
        }
        if !region.contains(origin) {
            return Err(Error::usage(format!("origin {origin} is not in the region")));
        }
        if let Region::Torus { side } = region {
            if *side <= 2 * self.model.range() + 1 {
                return Err(Error::usage("torus side must exceed 2L+1"));
            }
        }
        Ok(())
    }

    /// Sites of the open cluster of `origin` in `region`; the flag reports
    /// whether the cap stopped the search.
    pub fn cluster<R: Rng + ?Sized>(
        &self,
        region: &Region,
        origin: Point,
        cap: usize,
        rng: &mut R,
    ) -> Result<(Vec<Point>, bool)> {
        self.check_region(region, &origin)?;
        let origin = region.wrap(origin);
        let mut visited = FxHashSet::default();
        visited.insert(origin.key());
        let mut sites = vec![origin];
        let mut head = 0;
        let mut capped = false;
        'bfs: while head < sites.len() {
            let x = sites[head];
            head += 1;
            let mut overflow = false;
            self.for_each_open(rng, |off| {
                if overflow {
                    return;
                }
                let y = region.wrap(x + off);
                if region.contains(&y) && !visited.contains(&y.key()) {
                    if sites.len() >= cap {
                        overflow = true;
                        return;
                    }
                    visited.insert(y.key());
                    sites.push(y);
                }
            });
            if overflow {
                capped = true;
                break 'bfs;
            }
        }
        Ok((sites, capped))
    }

    /// Grows the cluster of the origin level by level through `family`,
    /// up to `max_level` (inclusive); `u32::MAX` explores the whole cluster.
    pub fn nested<R: Rng + ?Sized>(&self, family: Family, max_level: u32, cap: usize, rng: &mut R) -> NestedCluster {
        let origin = self.model.origin();
        let mut visited = FxHashSet::default();
        visited.insert(origin.key());
        let mut out = NestedCluster { sites: vec![origin], joined: vec![0], capped_at: None };
        let mut pending: Vec<Vec<Point>> = Vec::new();
        let mut level = 0u32;
        let mut head = 0;
        loop {
            while head < out.sites.len() {
                let x = out.sites[head];
                head += 1;
                let mut overflow = false;
                self.for_each_open(rng, |off| {
                    if overflow {
                        return;
                    }
                    let y = x + off;
                    let l = family.level(&y);
                    if l > max_level as i64 || visited.contains(&y.key()) {
                        return;
                    }
                    if l as u32 > level {
                        let l = l as usize;
                        if l >= pending.len() {
                            pending.resize_with(l + 1, Vec::new);
                        }
                        pending[l].push(y);
                    } else if out.sites.len() >= cap {
                        overflow = true;
                    } else {
                        visited.insert(y.key());
                        out.sites.push(y);
                        out.joined.push(level);
                    }
                });
                if overflow {
                    out.capped_at = Some(level);
                    return out;
                }
            }
            let Some(next) = (level as usize + 1..pending.len()).find(|&l| !pending[l].is_empty()) else {
                return out;
            };
            level = next as u32;
            for y in std::mem::take(&mut pending[next]) {
                if visited.contains(&y.key()) {
                    continue;
                }
                if out.sites.len() >= cap {
                    out.capped_at = Some(level);
                    return out;
                }
                visited.insert(y.key());
                out.sites.push(y);
                out.joined.push(level);
            }
        }
    }

    /// Exploration that samples each edge individually and records it.
    pub fn recorded<R: Rng + ?Sized>(
        &self,
        region: &Region,
        origin: Point,
        cap: usize,
        rng: &mut R,
    ) -> Result<ClusterSample> {
        self.check_region(region, &origin)?;
        let origin = region.wrap(origin);
        let p = self.model.p_beta();
        let mut visited = FxHashSet::default();
        visited.insert(origin.key());
        let mut sample = ClusterSample {
            origin,
            region: region.clone(),
            sites: vec![origin],
            touched_edges: Vec::new(),
            capped: false,
        };
        let mut head = 0;
        while head < sample.sites.len() {
            let x = sample.sites[head];
            head += 1;
            for off in self.offsets.iter() {
                let y = region.wrap(x + *off);
                if !region.contains(&y) || visited.contains(&y.key()) {
                    continue;
                }
                let open = rng.random::<f64>() < p;
                sample.touched_edges.push(TouchedEdge { a: x, b: y, open });
                if open {
                    if sample.sites.len() >= cap {
                        sample.capped = true;
                        return Ok(sample);
                    }
                    visited.insert(y.key());
                    sample.sites.push(y);
                }
            }
        }
        Ok(sample)
    }
}

/// Explores the open cluster of `origin` in `region`, recording every
/// sampled edge. Pure given `stream`.
pub fn explore_cluster(
    model: &SpreadOutModel,
    region: &Region,
    origin: Point,
    stream: RngStream,
    cap: usize,
) -> Result<ClusterSample> {
    if cap == 0 {
        return Err(Error::usage("cap must be at least 1"));
    }
    Explorer::new(model)?.recorded(region, origin, cap, &mut stream.rng())
}

/// Breadth-first exploration on a finite graph, sampling each edge out of a
/// popped site once. Returns the membership vector of the cluster of
/// `origin` using only edges inside `mask`.
pub fn explore_graph<R: Rng + ?Sized>(
    g: &FiniteGraph,
    adjacency: &GraphAdjacency,
    mask: &[bool],
    origin: usize,
    rng: &mut R,
) -> Vec<bool> {
    let mut inside = vec![false; g.n_sites()];
    inside[origin] = true;
    if !mask[origin] {
        return inside;
    }
    let mut queue = vec![origin];
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &(v, e) in &adjacency.0[u] {
            if mask[v] && !inside[v] && rng.random::<f64>() < g.prob(e) {
                inside[v] = true;
                queue.push(v);
            }
        }
    }
    inside
}

/// Adjacency lists `(neighbour, edge index)` of a finite graph.
#[derive(Clone, Debug)]
pub struct GraphAdjacency(Vec<Vec<(usize, usize)>>);

impl GraphAdjacency {
    pub fn new(g: &FiniteGraph) -> Self {
        let mut adj = vec![Vec::new(); g.n_sites()];
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
        GraphAdjacency(adj)
    }
}

/// Counts how often each site is reached, for tests of the sampler.
pub fn hit_frequencies(samples: &[Vec<Point>]) -> FxHashMap<Point, usize> {
    let mut m = FxHashMap::default();
    for s in samples {
        for x in s {
            *m.entry(*x).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::graph::{box_sites, connect_prob_mask};
    use crate::rng::par_samples;

    #[test]
    fn beta_zero_gives_singleton() {
        let m = SpreadOutModel::new(3, 2, 0.0).unwrap();
        let s = explore_cluster(&m, &Region::Full, m.origin(), RngStream::new(1), 10).unwrap();
        assert_eq!(s.sites, vec![m.origin()]);
        assert!(!s.capped);
    }

    #[test]
    fn cap_one_semantics() {
        let m = SpreadOutModel::new(2, 1, 1.5).unwrap();
        let e = Explorer::new(&m).unwrap();
        let root = RngStream::new(3);
        for i in 0..200 {
            let s = e.recorded(&Region::Full, m.origin(), 1, &mut root.child(i).rng()).unwrap();
            assert_eq!(s.sites.len(), 1);
            assert_eq!(s.capped, s.touched_edges.iter().any(|t| t.open));
        }
    }

    #[test]
    fn recorded_edges_are_unique() {
        let m = SpreadOutModel::new(2, 2, 1.5).unwrap();
        let root = RngStream::new(5);
        for i in 0..50 {
            let s = explore_cluster(&m, &Region::cube(2, 4), m.origin(), root.child(i), 1000).unwrap();
            let mut keys: Vec<_> = s.touched_edges.iter().map(|t| t.key()).collect();
            let n = keys.len();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), n);
            // The cluster is exactly what the open recorded edges connect.
            let open: Vec<_> = s.touched_edges.iter().filter(|t| t.open).collect();
            assert_eq!(open.len() + 1, s.sites.len());
        }
    }

    #[test]
    fn torus_clusters_wrap() {
        let m = SpreadOutModel::new(1, 1, 1.9).unwrap();
        let e = Explorer::new(&m).unwrap();
        let t = Region::torus(6).unwrap();
        let root = RngStream::new(9);
        for i in 0..100 {
            let (sites, _) = e.cluster(&t, m.origin(), 100, &mut root.child(i).rng()).unwrap();
            assert!(sites.len() <= 6);
            assert!(sites.iter().all(|s| (-3..3).contains(&s.get(0))));
        }
        assert!(e.cluster(&Region::torus(2).unwrap(), m.origin(), 10, &mut root.rng()).is_err());
    }

    #[test]
    fn cluster_frequencies_match_enumeration() {
        let m = SpreadOutModel::new(2, 1, 1.8).unwrap();
        let g = FiniteGraph::induced(&m, box_sites(2, 1)).unwrap();
        let region = Region::cube(2, 1);
        let e = Explorer::new(&m).unwrap();
        let n = 100_000;
        let samples =
            par_samples(n, RngStream::new(21), |_, r| e.cluster(&region, m.origin(), usize::MAX, r).unwrap().0);
        let freq = hit_frequencies(&samples);
        let o = g.index_of(&m.origin()).unwrap();
        let mask = g.full_mask();
        for (i, x) in g.sites().iter().enumerate() {
            let exact = connect_prob_mask(&g, &mask, o, i).unwrap();
            let hat = *freq.get(x).unwrap_or(&0) as f64 / n as f64;
            let se = (exact * (1.0 - exact) / n as f64).sqrt().max(1e-12);
            assert!((hat - exact).abs() <= 4.0 * se, "{x}: {hat} vs {exact}");
        }
    }

    #[test]
    fn nested_levels_match_direct_clusters() {
        // With a shared stream the level-k cluster is not the same draw as a
        // direct exploration, but both must have the same law: compare means.
        let m = SpreadOutModel::new(2, 2, 1.2).unwrap();
        let e = Explorer::new(&m).unwrap();
        let n = 40_000;
        let nested = par_samples(n, RngStream::new(2), |_, r| e.nested(Family::Boxes, 3, usize::MAX, r));
        for k in 0..=3u32 {
            let direct = par_samples(n, RngStream::new(100 + k as u64), |_, r| {
                e.cluster(&Region::cube(2, k as i64), m.origin(), usize::MAX, r).unwrap().0.len() as f64
            });
            let a: Vec<f64> = nested.iter().map(|c| c.size_at(k) as f64).collect();
            let (ma, sa) = crate::stats::mean_se(&a);
            let (mb, sb) = crate::stats::mean_se(&direct);
            assert!((ma - mb).abs() <= 4.0 * (sa * sa + sb * sb).sqrt(), "k={k}: {ma} vs {mb}");
        }
        for c in &nested {
            for (s, &j) in c.sites.iter().zip(&c.joined) {
                assert!(s.linf() <= j as i64);
            }
        }
    }

    #[test]
    fn graph_explorer_matches_enumeration() {
        let m = SpreadOutModel::new(1, 2, 1.6).unwrap();
        let sites: Vec<Point> = (0..4).map(|i| Point::new(&[i]).unwrap()).collect();
        let g = FiniteGraph::induced(&m, sites).unwrap();
        let adj = GraphAdjacency::new(&g);
        let mask = vec![true, true, false, true];
        let n = 100_000;
        let hits = par_samples(n, RngStream::new(4), |_, r| explore_graph(&g, &adj, &mask, 0, r)[3]);
        let hat = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
        let exact = connect_prob_mask(&g, &mask, 0, 3).unwrap();
        assert!((hat - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt());
    }
}
