//! The error term `E_β(S, Λ, o, x)` of the reversed Simon–Lieb inequality
//! and the error amplitude `E_β(B)`.
//!
//! Both are sums of products of two-point functions. With
//! `W(u,v) = Σ_{y∈S, z∈Λ\S} G_S(u,y) p_{yz} G_Λ(z,v)` they factor as
//!
//! * first term: `Σ_{u,v∈S} G_S(o,u) W(u,v) G_S(u,v) G_Λ(v,x)`;
//! * second term: `Σ_{u∈S, v∈Λ} G_S(o,u) [W(u,v)² - D(u,v)] G_Λ(v,x)`, where
//!   `D(u,v) = Σ_{y,z} (G_S(u,y) p_{yz} G_Λ(z,v))²` removes the diagonal
//!   `yz = st` from the double sum over exit edges.
//!
//! For the error amplitude, `G_Λ` and the `u–v` factor of the first term are
//! the full-lattice two-point function and the factor `G_Λ(v,x)` is dropped.

use crate::error::{Error, Result};
use crate::estimators::green::SymmetricGreen;
use crate::estimators::McOptions;
use crate::lattice::{Point, Region, SpreadOutModel};
use crate::percolation::explore::{explore_graph, Explorer, GraphAdjacency};
use crate::percolation::graph::{box_sites, exact_tables, FiniteGraph, TwoPointTable};
use crate::rng::par_samples;
use crate::stats::{jackknife, Estimate};

/// Summation order used by the exact evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summation {
    Naive,
    Kahan,
}

/// Running sum in the requested order.
#[derive(Clone, Copy, Debug)]
pub struct Accumulator {
    mode: Summation,
    sum: f64,
    c: f64,
}

impl Accumulator {
    pub fn new(mode: Summation) -> Self {
        Accumulator { mode, sum: 0.0, c: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        match self.mode {
            Summation::Naive => self.sum += x,
            Summation::Kahan => {
                let t = self.sum + x;
                if self.sum.abs() >= x.abs() {
                    self.c += (self.sum - t) + x;
                } else {
                    self.c += (x - t) + self.sum;
                }
                self.sum = t;
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// The two displayed terms of the error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorTerms {
    pub first: f64,
    pub second: f64,
}

impl ErrorTerms {
    pub fn total(&self) -> f64 {
        self.first + self.second
    }
}

/// Inputs of [`error_sums`], all indexed by the same site list.
pub struct ErrorInputs<'a> {
    /// `G_S(a, b)`.
    pub gs: &'a TwoPointTable,
    /// `G_Λ(a, b)`.
    pub gl: &'a TwoPointTable,
    /// The `u–v` factor of the first term (`G_S` or the full `G`).
    pub guv: &'a TwoPointTable,
    /// Edge probabilities `p_{ab}`.
    pub p: &'a TwoPointTable,
    pub s: &'a [bool],
    pub lambda: &'a [bool],
    pub o: usize,
    /// Target `x`; `None` drops the factor `G_Λ(v, x)`.
    pub x: Option<usize>,
}

/// Evaluates both error terms with the factorization described in the
/// module documentation.
pub fn error_sums(inp: &ErrorInputs, mode: Summation) -> ErrorTerms {
    let n = inp.gs.n();
    let s: Vec<usize> = (0..n).filter(|&i| inp.s[i]).collect();
    let lam: Vec<usize> = (0..n).filter(|&i| inp.lambda[i]).collect();
    let exits: Vec<usize> = lam.iter().copied().filter(|&z| !inp.s[z]).collect();
    // Q(y, v) = Σ_{z∈Λ\S} p_yz G_Λ(z, v) and Q2 with squared factors.
    let mut q = TwoPointTable::zeros(n);
    let mut q2 = TwoPointTable::zeros(n);
    for &y in &s {
        for &v in &lam {
            let mut a = Accumulator::new(mode);
            let mut b = Accumulator::new(mode);
            for &z in &exits {
                let t = inp.p.get(y, z) * inp.gl.get(z, v);
                a.add(t);
                b.add(t * t);
            }
            q.set(y, v, a.value());
            q2.set(y, v, b.value());
        }
    }
    let tail = |v: usize| inp.x.map_or(1.0, |x| inp.gl.get(v, x));
    let mut first = Accumulator::new(mode);
    let mut second = Accumulator::new(mode);
    for &u in &s {
        let gou = inp.gs.get(inp.o, u);
        if gou == 0.0 {
            continue;
        }
        for &v in &lam {
            let mut w = Accumulator::new(mode);
            let mut dg = Accumulator::new(mode);
            for &y in &s {
                let g = inp.gs.get(u, y);
                w.add(g * q.get(y, v));
                dg.add(g * g * q2.get(y, v));
            }
            let (w, dg) = (w.value(), dg.value());
            let t = tail(v);
            if inp.s[v] {
                first.add(gou * w * inp.guv.get(u, v) * t);
            }
            // W² - D is a sum of nonnegative cross terms; clamp rounding.
            second.add(gou * (w * w - dg).max(0.0) * t);
        }
    }
    ErrorTerms { first: first.value(), second: second.value() }
}

pub(crate) fn prob_table(g: &FiniteGraph) -> TwoPointTable {
    let mut t = TwoPointTable::zeros(g.n_sites());
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        t.set(i, j, g.prob(e));
        t.set(j, i, g.prob(e));
    }
    t
}

/// Exact error terms on a finite graph.
pub fn error_terms_exact(
    g: &FiniteGraph,
    s: &[bool],
    lambda: &[bool],
    o: usize,
    x: usize,
    mode: Summation,
) -> Result<ErrorTerms> {
    check_nested(s, lambda, o, x)?;
    let t = exact_tables(g, &[s, lambda])?;
    let p = prob_table(g);
    Ok(error_sums(&ErrorInputs { gs: &t[0], gl: &t[1], guv: &t[0], p: &p, s, lambda, o, x: Some(x) }, mode))
}

fn check_nested(s: &[bool], lambda: &[bool], o: usize, x: usize) -> Result<()> {
    if s.iter().zip(lambda).any(|(&a, &b)| a && !b) {
        return Err(Error::usage("S must be a subset of Λ"));
    }
    if !s[o] {
        return Err(Error::usage("o must lie in S"));
    }
    if !lambda[x] {
        return Err(Error::usage("x must lie in Λ"));
    }
    Ok(())
}

const JACKKNIFE_GROUPS: usize = 20;

/// `E_β(S, Λ, o, x)` on a finite graph: exact when `mc` is `None`, otherwise
/// a plug-in of Monte Carlo two-point tables with a delete-one-group
/// jackknife standard error.
pub fn error_term(
    g: &FiniteGraph,
    s: &Region,
    lambda: &Region,
    o: &Point,
    x: &Point,
    mc: Option<McOptions>,
) -> Result<Estimate> {
    let (sm, lm) = (g.region_mask(s), g.region_mask(lambda));
    let (oi, xi) = (g.require(o)?, g.require(x)?);
    check_nested(&sm, &lm, oi, xi)?;
    let Some(opts) = mc else {
        return Ok(Estimate::exact(error_terms_exact(g, &sm, &lm, oi, xi, Summation::Naive)?.total()));
    };
    opts.check()?;
    let n = g.n_sites();
    let groups = JACKKNIFE_GROUPS.min(opts.n);
    let adj = GraphAdjacency::new(g);
    // hits[mask][group][a * n + b]
    let mut hits = vec![vec![vec![0u32; n * n]; groups]; 2];
    for (mi, mask) in [&sm, &lm].into_iter().enumerate() {
        for a in 0..n {
            let stream = opts.stream.child(mi as u64).child(a as u64);
            let rows = par_samples(opts.n, stream, |_, rng| explore_graph(g, &adj, mask, a, rng));
            for (i, row) in rows.iter().enumerate() {
                let grp = i * groups / opts.n;
                for (b, &hit) in row.iter().enumerate() {
                    if hit {
                        hits[mi][grp][a * n + b] += 1;
                    }
                }
            }
        }
    }
    let mut group_size = vec![0usize; groups];
    for i in 0..opts.n {
        group_size[i * groups / opts.n] += 1;
    }
    let p = prob_table(g);
    let table = |mi: usize, skip: Option<usize>| {
        let mut t = TwoPointTable::zeros(n);
        let total: usize = (0..groups).filter(|&k| Some(k) != skip).map(|k| group_size[k]).sum();
        for k in (0..groups).filter(|&k| Some(k) != skip) {
            for a in 0..n {
                for b in 0..n {
                    t.add(a, b, hits[mi][k][a * n + b] as f64);
                }
            }
        }
        t.scale(1.0 / total as f64);
        t
    };
    let (value, se) = jackknife(groups, |skip| {
        let (gs, gl) = (table(0, skip), table(1, skip));
        error_sums(
            &ErrorInputs { gs: &gs, gl: &gl, guv: &gs, p: &p, s: &sm, lambda: &lm, o: oi, x: Some(xi) },
            Summation::Naive,
        )
        .total()
    });
    Ok(Estimate { value, std_error: se, n_samples: opts.n, truncation: None, censored_rate: 0.0 })
}

/// Parameters of the error-amplitude estimator.
#[derive(Clone, Copy, Debug)]
pub struct ErrorAmplitudeOptions {
    /// Outer sums are truncated to `Λ_R`.
    pub window: i64,
    pub mc: McOptions,
}

/// Largest site list the amplitude window may use.
pub const MAX_AMPLITUDE_SITES: usize = 2_500;

fn amplitude_on_window(model: &SpreadOutModel, b: &Region, r: i64, opts: McOptions) -> Result<(f64, f64)> {
    let l = model.range();
    let sites = box_sites(model.dim(), r + l);
    let n = sites.len();
    if n > MAX_AMPLITUDE_SITES {
        return Err(Error::capacity(format!("window Λ_{} has {n} sites, more than {MAX_AMPLITUDE_SITES}", r + l)));
    }
    let index = |x: &Point| sites.iter().position(|s| s == x);
    let s_mask: Vec<bool> = sites.iter().map(|x| b.contains(x) && x.linf() <= r).collect();
    let lam = vec![true; n];
    let o = index(&model.origin()).expect("origin in window");
    let groups = JACKKNIFE_GROUPS.min(opts.n);
    let green = SymmetricGreen::sample(model, 2 * (r + l), groups, opts.with_stream(opts.stream.named("full")))?;
    // G_B(a, ·) on the window for every source a in S, by groups.
    let explorer = Explorer::new(model)?;
    let mut gb = vec![vec![0u32; n * n]; groups];
    let mut kept = vec![vec![0usize; n]; groups];
    for a in (0..n).filter(|&a| s_mask[a]) {
        let stream = opts.stream.named("block").child(a as u64);
        let rows = par_samples(opts.n, stream, |_, rng| {
            explorer.cluster(b, sites[a], opts.cap, rng).map(|(c, capped)| (!capped).then_some(c))
        });
        for (i, row) in rows.into_iter().enumerate() {
            let grp = i * groups / opts.n;
            if let Some(cluster) = row? {
                kept[grp][a] += 1;
                for y in cluster {
                    if let Some(j) = index(&y) {
                        gb[grp][a * n + j] += 1;
                    }
                }
            }
        }
    }
    let mut p = TwoPointTable::zeros(n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, model.edge_probability(&sites[i], &sites[j])?);
        }
    }
    let eval = |skip: Option<usize>| {
        let mut gs = TwoPointTable::zeros(n);
        let mut full = TwoPointTable::zeros(n);
        for a in 0..n {
            for c in 0..n {
                full.set(a, c, green.get_without(&(sites[c] - sites[a]), skip));
            }
            if !s_mask[a] {
                continue;
            }
            let tot: usize = (0..groups).filter(|&k| Some(k) != skip).map(|k| kept[k][a]).sum();
            for c in 0..n {
                let h: u32 = (0..groups).filter(|&k| Some(k) != skip).map(|k| gb[k][a * n + c]).sum();
                gs.set(a, c, if tot > 0 { h as f64 / tot as f64 } else { 0.0 });
            }
        }
        error_sums(
            &ErrorInputs { gs: &gs, gl: &full, guv: &full, p: &p, s: &s_mask, lambda: &lam, o, x: None },
            Summation::Naive,
        )
        .total()
    };
    Ok(jackknife(groups, eval))
}

/// Error amplitude `E_β(B)` with outer sums truncated to `Λ_R`. The value is
/// the window-`R` estimate; the truncation field records the increment
/// over the window `R/2`.
pub fn error_amplitude(model: &SpreadOutModel, b: &Region, opts: ErrorAmplitudeOptions) -> Result<Estimate> {
    if !b.contains(&model.origin()) {
        return Err(Error::usage("the block must contain the origin"));
    }
    if opts.window < 1 {
        return Err(Error::usage("window must be at least 1"));
    }
    opts.mc.check()?;
    if model.p_beta() == 0.0 {
        return Ok(Estimate::exact(0.0).with_truncation(format!("R={}; increment=0", opts.window)));
    }
    let (v, se) = amplitude_on_window(model, b, opts.window, opts.mc)?;
    let half = (opts.window / 2).max(1);
    let inc = if half < opts.window {
        let (vh, _) = amplitude_on_window(model, b, half, opts.mc.with_stream(opts.mc.stream.named("half")))?;
        v - vh
    } else {
        0.0
    };
    Ok(Estimate {
        value: v,
        std_error: se,
        n_samples: opts.mc.n,
        truncation: Some(format!("R={}; increment={inc:.6e}", opts.window)),
        censored_rate: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(x: i64) -> Point {
        Point::new(&[x]).unwrap()
    }

    /// The two displayed sums, term by term.
    fn brute(g: &FiniteGraph, s: &[bool], l: &[bool], o: usize, x: usize) -> f64 {
        let t = exact_tables(g, &[s, l]).unwrap();
        let (gs, gl) = (&t[0], &t[1]);
        let p = prob_table(g);
        let n = g.n_sites();
        let exits: Vec<(usize, usize)> =
            (0..n).flat_map(|y| (0..n).map(move |z| (y, z))).filter(|&(y, z)| s[y] && l[z] && !s[z]).collect();
        let mut first = 0.0;
        for u in (0..n).filter(|&u| s[u]) {
            for v in (0..n).filter(|&v| s[v]) {
                for &(y, z) in &exits {
                    first += gs.get(o, u) * gs.get(u, y) * p.get(y, z) * gl.get(z, v) * gs.get(u, v) * gl.get(v, x);
                }
            }
        }
        let mut second = 0.0;
        for u in (0..n).filter(|&u| s[u]) {
            for v in (0..n).filter(|&v| l[v]) {
                for &(y, z) in &exits {
                    for &(s2, t2) in &exits {
                        if (y, z) == (s2, t2) {
                            continue;
                        }
                        second += gs.get(o, u)
                            * gs.get(u, y)
                            * gs.get(u, s2)
                            * p.get(y, z)
                            * p.get(s2, t2)
                            * gl.get(z, v)
                            * gl.get(t2, v)
                            * gl.get(v, x);
                    }
                }
            }
        }
        first + second
    }

    #[test]
    fn three_site_matches_brute_force() {
        let m = SpreadOutModel::new(1, 2, 1.0).unwrap();
        let g = FiniteGraph::induced(&m, vec![p1(0), p1(1), p1(2)]).unwrap();
        let s = [true, false, false];
        let l = [true, true, true];
        for x in 0..3 {
            let e = error_terms_exact(&g, &s, &l, 0, x, Summation::Naive).unwrap().total();
            let k = error_terms_exact(&g, &s, &l, 0, x, Summation::Kahan).unwrap().total();
            let b = brute(&g, &s, &l, 0, x);
            assert!((e - b).abs() < 1e-12, "x={x}: {e} vs {b}");
            assert!((e - k).abs() < 1e-12);
            assert!(e > 0.0);
        }
    }

    #[test]
    fn brute_force_on_two_dimensional_graphs() {
        let m = SpreadOutModel::new(2, 1, 1.5).unwrap();
        let sites = box_sites(2, 1);
        let g = FiniteGraph::induced_filtered(&m, sites, |i, j| (i * 7 + j * 3) % 4 != 0).unwrap();
        let g = g.with_probs(g.probs().to_vec()).unwrap();
        assert!(g.n_edges() <= 16);
        let s: Vec<bool> = g.sites().iter().map(|x| x.get(0) <= 0 && x.get(1) == 0).collect();
        let l: Vec<bool> = g.sites().iter().map(|x| x.get(1) >= 0 || x.get(0) == 0).collect();
        let o = g.index_of(&Point::origin(2)).unwrap();
        for x in (0..g.n_sites()).filter(|&x| l[x]) {
            let e = error_terms_exact(&g, &s, &l, o, x, Summation::Naive).unwrap().total();
            let b = brute(&g, &s, &l, o, x);
            assert!((e - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn zero_at_beta_zero() {
        let m = SpreadOutModel::new(1, 2, 0.0).unwrap();
        let g = FiniteGraph::induced(&m, vec![p1(0), p1(1), p1(2)]).unwrap();
        let s = Region::cube(1, 0);
        let e = error_term(&g, &s, &Region::Full, &p1(0), &p1(2), None).unwrap();
        assert_eq!(e.value, 0.0);
        let a = error_amplitude(
            &SpreadOutModel::new(2, 1, 0.0).unwrap(),
            &Region::cube(2, 2),
            ErrorAmplitudeOptions { window: 4, mc: McOptions::new(10, 1) },
        )
        .unwrap();
        assert_eq!(a.value, 0.0);
    }

    #[test]
    fn usage_errors() {
        let m = SpreadOutModel::new(1, 2, 1.0).unwrap();
        let g = FiniteGraph::induced(&m, vec![p1(0), p1(1), p1(2)]).unwrap();
        let big = Region::cube(1, 1);
        let small = Region::cube(1, 0);
        assert!(error_term(&g, &big, &small, &p1(0), &p1(0), None).is_err());
        assert!(error_term(&g, &small, &Region::Full, &p1(1), &p1(2), None).is_err());
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let m = SpreadOutModel::new(1, 2, 1.4).unwrap();
        let g = FiniteGraph::induced(&m, vec![p1(-1), p1(0), p1(1), p1(2)]).unwrap();
        let s = Region::cube(1, 0);
        let exact = error_term(&g, &s, &Region::Full, &p1(0), &p1(2), None).unwrap();
        let mc = error_term(&g, &s, &Region::Full, &p1(0), &p1(2), Some(McOptions::new(20_000, 3))).unwrap();
        assert!(mc.std_error > 0.0);
        assert!(mc.z_score(exact.value) < 4.0, "{mc:?} vs {exact:?}");
    }

    #[test]
    fn amplitude_is_positive_and_guarded() {
        let m = SpreadOutModel::new(1, 1, 1.0).unwrap();
        let a =
            error_amplitude(&m, &Region::cube(1, 2), ErrorAmplitudeOptions { window: 4, mc: McOptions::new(2000, 1) })
                .unwrap();
        assert!(a.value > 0.0 && a.std_error > 0.0);
        let m = SpreadOutModel::new(3, 2, 1.0).unwrap();
        let r =
            error_amplitude(&m, &Region::cube(3, 2), ErrorAmplitudeOptions { window: 8, mc: McOptions::new(10, 1) });
        assert!(matches!(r, Err(Error::Capacity(_))));
    }
}
