//! Finite edge sets with per-edge probabilities and exact enumeration of
//! all `2^E` configurations.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::lattice::{Point, Region, SpreadOutModel};

/// Largest edge count the exact enumerator accepts.
pub const MAX_ENUM_EDGES: usize = 30;

/// A finite graph on lattice sites with independent edge probabilities.
#[derive(Clone, Debug)]
pub struct FiniteGraph {
    sites: Vec<Point>,
    edges: Vec<(usize, usize)>,
    probs: Vec<f64>,
    index: FxHashMap<Point, usize>,
}

impl FiniteGraph {
    /// Edges are `(i, j, p)` with site indices `i != j`.
    pub fn new(sites: Vec<Point>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut index = FxHashMap::default();
        for (i, s) in sites.iter().enumerate() {
            if index.insert(*s, i).is_some() {
                return Err(Error::usage(format!("site {s} listed twice")));
            }
        }
        let mut seen = FxHashMap::default();
        let mut es = Vec::with_capacity(edges.len());
        let mut ps = Vec::with_capacity(edges.len());
        for (k, &(i, j, p)) in edges.iter().enumerate() {
            if i >= sites.len() || j >= sites.len() {
                return Err(Error::usage(format!("edge {k} has an endpoint outside the site list")));
            }
            if i == j {
                return Err(Error::usage(format!("edge {k} is a self-loop")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::usage(format!("edge {k} has probability {p} outside [0,1]")));
            }
            if seen.insert((i.min(j), i.max(j)), k).is_some() {
                return Err(Error::usage(format!("edge {{{i},{j}}} listed twice")));
            }
            es.push((i, j));
            ps.push(p);
        }
        Ok(FiniteGraph { sites, edges: es, probs: ps, index })
    }

    /// All kernel edges of `model` among `sites`, in lexicographic index order.
    pub fn induced(model: &SpreadOutModel, sites: Vec<Point>) -> Result<Self> {
        Self::induced_filtered(model, sites, |_, _| true)
    }

    /// Kernel edges among `sites` for which `keep(i, j)` holds (`i < j`).
    pub fn induced_filtered(
        model: &SpreadOutModel,
        sites: Vec<Point>,
        mut keep: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                let p = model.edge_probability(&sites[i], &sites[j])?;
                if p > 0.0 && keep(i, j) {
                    edges.push((i, j, p));
                }
            }
        }
        FiniteGraph::new(sites, edges)
    }

    /// The sites of `Λ_n` in row-major order, with all kernel edges.
    pub fn box_substrate(model: &SpreadOutModel, n: i64) -> Result<Self> {
        FiniteGraph::induced(model, box_sites(model.dim(), n))
    }

    /// Same graph with every edge probability replaced.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.edges.len() {
            return Err(Error::usage("probability vector length differs from edge count"));
        }
        FiniteGraph::new(self.sites.clone(), self.edges.iter().zip(probs).map(|(&(i, j), p)| (i, j, p)).collect())
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Point {
        self.sites[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn prob(&self, e: usize) -> f64 {
        self.probs[e]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, x: &Point) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub(crate) fn require(&self, x: &Point) -> Result<usize> {
        self.index_of(x).ok_or_else(|| Error::usage(format!("{x} is not a site of the graph")))
    }

    /// Probability of the edge `{i, j}` (0 if absent).
    pub fn pair_prob(&self, i: usize, j: usize) -> f64 {
        self.edges.iter().position(|&(a, b)| (a == i && b == j) || (a == j && b == i)).map_or(0.0, |e| self.probs[e])
    }

    /// Dense `n × n` matrix of pair probabilities.
    pub fn prob_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_sites();
        let mut m = vec![vec![0.0; n]; n];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            m[i][j] = self.probs[e];
            m[j][i] = self.probs[e];
        }
        m
    }

    pub fn region_mask(&self, region: &Region) -> Vec<bool> {
        self.sites.iter().map(|s| region.contains(s)).collect()
    }

    pub fn full_mask(&self) -> Vec<bool> {
        vec![true; self.n_sites()]
    }

    pub(crate) fn check_enumerable(&self) -> Result<()> {
        if self.edges.len() > MAX_ENUM_EDGES {
            return Err(Error::capacity(format!(
                "{} edges exceed the enumeration limit of {MAX_ENUM_EDGES}",
                self.edges.len()
            )));
        }
        Ok(())
    }
}

/// Sites of `Λ_n` in row-major order.
pub fn box_sites(d: usize, n: i64) -> Vec<Point> {
    let w = (2 * n + 1) as usize;
    let total = w.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0i64; d];
            for slot in c.iter_mut().rev() {
                *slot = (idx % w) as i64 - n;
                idx /= w;
            }
            Point::new(&c).expect("box coordinates fit")
        })
        .collect()
}

/// An edge configuration: bit `i` set iff edge `i` is open.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeConfig(pub u64);

impl EdgeConfig {
    #[inline]
    pub fn is_open(&self, e: usize) -> bool {
        self.0 >> e & 1 == 1
    }

    pub fn weight(&self, g: &FiniteGraph) -> f64 {
        g.probs.iter().enumerate().map(|(e, &p)| if self.is_open(e) { p } else { 1.0 - p }).product()
    }

    pub fn open_edges(&self, g: &FiniteGraph) -> Vec<usize> {
        (0..g.n_edges()).filter(|&e| self.is_open(e)).collect()
    }
}

/// Calls `f(config, weight)` for every configuration of positive weight.
pub fn for_each_config(g: &FiniteGraph, mut f: impl FnMut(EdgeConfig, f64)) -> Result<()> {
    g.check_enumerable()?;
    // Edges that are surely closed or surely open are fixed, the rest enumerated.
    let free: Vec<usize> = (0..g.n_edges()).filter(|&e| g.probs[e] > 0.0 && g.probs[e] < 1.0).collect();
    let forced: u64 = (0..g.n_edges()).filter(|&e| g.probs[e] >= 1.0).fold(0, |m, e| m | 1 << e);
    for bits in 0u64..(1u64 << free.len()) {
        let mut mask = forced;
        let mut w = 1.0;
        for (k, &e) in free.iter().enumerate() {
            if bits >> k & 1 == 1 {
                mask |= 1 << e;
                w *= g.probs[e];
            } else {
                w *= 1.0 - g.probs[e];
            }
        }
        f(EdgeConfig(mask), w);
    }
    Ok(())
}

/// Union–find over the sites of a finite graph.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Component labels under the open edges of `config` whose endpoints both
/// lie in `mask`. Sites outside the mask are isolated.
pub fn components(g: &FiniteGraph, config: EdgeConfig, mask: &[bool]) -> Vec<usize> {
    let mut uf = UnionFind::new(g.n_sites());
    for (e, &(i, j)) in g.edges.iter().enumerate() {
        if config.is_open(e) && mask[i] && mask[j] {
            uf.union(i, j);
        }
    }
    (0..g.n_sites()).map(|i| uf.find(i)).collect()
}

/// `{x ↔^S y}` in a labelled configuration: `x = y`, or both in `S` and in
/// the same component.
#[inline]
pub fn connected(labels: &[usize], mask: &[bool], x: usize, y: usize) -> bool {
    x == y || (mask[x] && mask[y] && labels[x] == labels[y])
}

/// Compensated (Neumaier) running sum. Enumerations add up to 2^30
/// weights, where naive accumulation drifts by ~1e-12.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact `P[x ↔^S y]` for a site mask.
pub fn connect_prob_mask(g: &FiniteGraph, mask: &[bool], x: usize, y: usize) -> Result<f64> {
    let mut total = CompensatedSum::default();
    for_each_config(g, |c, w| {
        if connected(&components(g, c, mask), mask, x, y) {
            total.add(w);
        }
    })?;
    Ok(total.value())
}

/// Exact `P[x ↔^region y]` by summing over all configurations.
pub fn enumerate_connect_prob(g: &FiniteGraph, region: &Region, x: &Point, y: &Point) -> Result<f64> {
    let (xi, yi) = (g.require(x)?, g.require(y)?);
    connect_prob_mask(g, &g.region_mask(region), xi, yi)
}

/// The full two-point matrix `G_S(a, b)` of a finite graph restricted to `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPointTable {
    n: usize,
    data: Vec<f64>,
}

impl TwoPointTable {
    pub fn zeros(n: usize) -> Self {
        TwoPointTable { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }

    #[inline]
    pub(crate) fn add(&mut self, a: usize, b: usize, v: f64) {
        self.data[a * self.n + b] += v;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub(crate) fn set(&mut self, a: usize, b: usize, v: f64) {
        self.data[a * self.n + b] = v;
    }
}

/// Exact two-point tables for several site masks from one enumeration.
pub fn exact_tables(g: &FiniteGraph, masks: &[&[bool]]) -> Result<Vec<TwoPointTable>> {
    let n = g.n_sites();
    let mut sums = vec![vec![CompensatedSum::default(); n * n]; masks.len()];
    for_each_config(g, |c, w| {
        for (t, mask) in sums.iter_mut().zip(masks) {
            let labels = components(g, c, mask);
            for a in 0..n {
                for b in 0..n {
                    if connected(&labels, mask, a, b) {
                        t[a * n + b].add(w);
                    }
                }
            }
        }
    })?;
    Ok(sums.into_iter().map(|t| TwoPointTable { n, data: t.iter().map(CompensatedSum::value).collect() }).collect())
}
