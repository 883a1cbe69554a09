//! Randomized instance generation and the exact-inequality sweep.
//!
//! Random instances are Erdős–Rényi subgraphs of small spread-out boxes
//! with the kernel probability `p_β`; adversarial instances put long,
//! heterogeneous edges across the boundary of `S`, so that many `(y, z)`
//! exit pairs compete in the second error term.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::error_term::{error_terms_exact, Summation};
use crate::lattice::{Point, SpreadOutModel};
use crate::oracle::replay::Instance;
use crate::oracle::{verify_bk, verify_simon_lieb_both, verify_tree_bound, Check, InequalityReport};
use crate::percolation::graph::box_sites;
use crate::rng::{par_samples, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Random Erdős–Rényi instances.
    pub instances: usize,
    /// Hand-shaped instances with long edges across the boundary of `S`.
    pub adversarial: usize,
    pub dims: Vec<usize>,
    pub ranges: Vec<i64>,
    pub betas: Vec<f64>,
    pub max_edges: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            instances: 500,
            adversarial: 60,
            dims: vec![1, 2],
            ranges: vec![1, 2, 3],
            betas: vec![0.1, 0.5, 1.0, 1.5],
            max_edges: 12,
            seed: 20_240_601,
        }
    }
}

impl SweepConfig {
    pub fn check(&self) -> Result<()> {
        if self.instances > 0 && (self.dims.is_empty() || self.ranges.is_empty() || self.betas.is_empty()) {
            return Err(Error::usage("sweep needs at least one dimension, range and β"));
        }
        if self.dims.iter().any(|&d| !(1..=2).contains(&d)) {
            return Err(Error::usage("sweep dimensions must be 1 or 2"));
        }
        if self.ranges.iter().any(|&l| !(1..=3).contains(&l)) {
            return Err(Error::usage("sweep ranges must lie in 1..=3"));
        }
        if self.betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::usage("sweep β values must be finite and nonnegative"));
        }
        if !(3..=20).contains(&self.max_edges) {
            return Err(Error::usage("max_edges must lie in 3..=20"));
        }
        Ok(())
    }
}

fn subset_with(rng: &mut ChaCha8Rng, n: usize, keep: usize, q: f64) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.random_bool(q)).collect();
    m[keep] = true;
    m
}

fn ids(m: &[bool]) -> Vec<usize> {
    (0..m.len()).filter(|&i| m[i]).collect()
}

fn pick(rng: &mut ChaCha8Rng, from: &[usize]) -> usize {
    from[rng.random_range(0..from.len())]
}

/// Attaches `S`, `L`, `o`, `x`, `a`, `b` and two events, all chosen at random
/// with `o` at index `o`.
fn decorate(inst: &mut Instance, rng: &mut ChaCha8Rng, o: usize, s: Vec<bool>) {
    let n = inst.sites.len();
    let mut lambda: Vec<bool> = (0..n).map(|i| s[i] || rng.random_bool(0.8)).collect();
    lambda[o] = true;
    let (si, li) = (ids(&s), ids(&lambda));
    let x = pick(rng, &li);
    let (a, b) = (pick(rng, &si), pick(rng, &si));
    inst.regions.insert("S".into(), si);
    inst.regions.insert("L".into(), li);
    inst.points.insert("o".into(), o);
    inst.points.insert("x".into(), x);
    inst.points.insert("a".into(), a);
    inst.points.insert("b".into(), b);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..2 {
        let u = pick(rng, &all);
        let v = loop {
            let v = pick(rng, &all);
            if v != u || n == 1 {
                break v;
            }
        };
        inst.events.push((u, v));
    }
}

fn erdos_renyi(cfg: &SweepConfig, k: usize, rng: &mut ChaCha8Rng) -> Result<Instance> {
    // Cycle through the (d, L, β) grid so every cell is covered.
    let (nd, nl, nb) = (cfg.dims.len(), cfg.ranges.len(), cfg.betas.len());
    let d = cfg.dims[k % nd];
    let l = cfg.ranges[(k / nd) % nl];
    let beta = cfg.betas[(k / (nd * nl)) % nb];
    let model = SpreadOutModel::new(d, l, beta)?;
    let p = model.p_beta();
    let radius = if d == 1 { rng.random_range(2..=3) } else { 1 };
    let sites = box_sites(d, radius);
    let mut edges = Vec::new();
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            let gap = (sites[i] - sites[j]).linf();
            if gap <= l && rng.random_bool(0.6) {
                edges.push((i, j, p));
            }
        }
    }
    edges.shuffle(rng);
    edges.truncate(cfg.max_edges);
    edges.sort_by_key(|&(i, j, _)| (i, j));
    let o = sites.iter().position(Point::is_origin).expect("box contains the origin");
    let mut inst = Instance::new(format!("random #{k} d={d} L={l} beta={beta}"), d);
    inst.sites = sites.iter().map(|s| s.coords().iter().map(|&c| c as i64).collect()).collect();
    inst.edges = edges;
    let s = subset_with(rng, sites.len(), o, 0.5);
    decorate(&mut inst, rng, o, s);
    Ok(inst)
}

/// Sites `0..n` on a line, `S` an initial segment, and long edges from `S`
/// to the far exterior with probabilities drawn from `{0, 1}` and `(0, 1)`.
fn adversarial(cfg: &SweepConfig, k: usize, rng: &mut ChaCha8Rng) -> Instance {
    let inside = rng.random_range(2..=3usize);
    let outside = rng.random_range(2..=3usize);
    let n = inside + outside;
    let prob = |rng: &mut ChaCha8Rng| match rng.random_range(0..6) {
        0 => 1.0,
        1 => 0.0,
        _ => rng.random_range(0.05..0.95),
    };
    let mut edges = Vec::new();
    for y in 0..inside {
        for z in inside..n {
            edges.push((y, z, prob(rng)));
        }
    }
    for i in 0..inside {
        for j in i + 1..inside {
            edges.push((i, j, prob(rng)));
        }
    }
    for i in inside..n {
        for j in i + 1..n {
            edges.push((i, j, prob(rng)));
        }
    }
    edges.shuffle(rng);
    edges.truncate(cfg.max_edges);
    edges.sort_by_key(|&(i, j, _)| (i, j));
    let mut inst = Instance::new(format!("adversarial #{k} |S|={inside} exterior={outside}"), 1);
    inst.sites = (0..n as i64).map(|i| vec![i]).collect();
    inst.edges = edges;
    let s: Vec<bool> = (0..n).map(|i| i < inside).collect();
    decorate(&mut inst, rng, 0, s);
    inst
}

/// The random and adversarial instances of a sweep, in a fixed order.
pub fn random_instances(cfg: &SweepConfig) -> Result<Vec<Instance>> {
    cfg.check()?;
    let root = RngStream::new(cfg.seed);
    let mut out: Vec<Instance> = par_samples(cfg.instances, root.named("random"), |k, rng| erdos_renyi(cfg, k, rng))
        .into_iter()
        .collect::<Result<_>>()?;
    out.extend(par_samples(cfg.adversarial, root.named("adversarial"), |k, rng| adversarial(cfg, k, rng)));
    Ok(out)
}

/// Every check an instance declares enough data for (see the replay
/// format documentation).
pub fn verify_instance(inst: &Instance) -> Result<Vec<InequalityReport>> {
    let g = inst.graph()?;
    let mut out = Vec::new();
    let pairs: Vec<_> = inst.events.iter().flat_map(|&a| inst.events.iter().map(move |&b| (a, b))).collect();
    out.extend(verify_bk(&g, &pairs)?);
    let s = inst.mask("S");
    if let (Some(s), Some(o), Some(a), Some(b)) = (&s, inst.point("o"), inst.point("a"), inst.point("b")) {
        out.push(verify_tree_bound(&g, o, a, b, s)?);
    }
    if let (Some(s), Some(o), Some(x)) = (&s, inst.point("o"), inst.point("x")) {
        let lambda = inst.mask("L").unwrap_or_else(|| g.full_mask());
        out.extend(verify_simon_lieb_both(&g, s, &lambda, o, x)?);
    }
    for r in &mut out {
        r.instance = format!("{}: {}", inst.label, r.instance);
    }
    Ok(out)
}

/// Pass counts and worst slack for one kind of check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub total: usize,
    pub passed: usize,
    pub min_slack: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub instances: usize,
    pub tallies: BTreeMap<String, CheckTally>,
    /// Failing reports with the full instance text for replay.
    pub failures: Vec<(InequalityReport, String)>,
    /// Largest `|E_kahan - E_naive|` over instances with `S` and `x`.
    pub max_summation_gap: f64,
    /// Smallest exact `E_β(S, Λ, o, x)` seen.
    pub min_error_term: f64,
}

impl SweepSummary {
    pub fn total_failures(&self) -> usize {
        self.tallies.values().map(|t| t.total - t.passed).sum()
    }

    pub fn tally(&self, check: Check) -> Option<&CheckTally> {
        self.tallies.get(check.name())
    }
}

struct InstanceOutcome {
    reports: Vec<InequalityReport>,
    gap: f64,
    error: f64,
}

fn run_one(inst: &Instance) -> Result<InstanceOutcome> {
    let reports = verify_instance(inst)?;
    let (mut gap, mut error) = (0.0, f64::INFINITY);
    if let (Some(s), Some(o), Some(x)) = (inst.mask("S"), inst.point("o"), inst.point("x")) {
        let g = inst.graph()?;
        let lambda = inst.mask("L").unwrap_or_else(|| g.full_mask());
        let k = error_terms_exact(&g, &s, &lambda, o, x, Summation::Kahan)?.total();
        let n = error_terms_exact(&g, &s, &lambda, o, x, Summation::Naive)?.total();
        gap = (k - n).abs();
        error = k;
    }
    Ok(InstanceOutcome { reports, gap, error })
}

/// Runs every check on the given instances in parallel; results are merged
/// in instance order.
pub fn summarize(instances: &[Instance]) -> Result<SweepSummary> {
    let outcomes: Vec<Result<InstanceOutcome>> = instances.par_iter().map(run_one).collect();
    let mut sum = SweepSummary { instances: instances.len(), min_error_term: f64::INFINITY, ..Default::default() };
    for (inst, out) in instances.iter().zip(outcomes) {
        let out = out?;
        sum.max_summation_gap = sum.max_summation_gap.max(out.gap);
        sum.min_error_term = sum.min_error_term.min(out.error);
        for r in out.reports {
            let t = sum
                .tallies
                .entry(r.check.name().to_string())
                .or_insert(CheckTally { min_slack: f64::INFINITY, ..Default::default() });
            t.total += 1;
            t.passed += r.passed as usize;
            t.min_slack = t.min_slack.min(r.slack);
            if !r.passed {
                sum.failures.push((r, inst.to_text()));
            }
        }
    }
    Ok(sum)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    summarize(&random_instances(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_respect_the_configuration() {
        let cfg = SweepConfig { instances: 48, adversarial: 10, ..Default::default() };
        let insts = random_instances(&cfg).unwrap();
        assert_eq!(insts.len(), 58);
        for i in &insts {
            assert!(i.edges.len() <= cfg.max_edges);
            let s = i.mask("S").unwrap();
            let l = i.mask("L").unwrap();
            assert!(s[i.point("o").unwrap()]);
            assert!(s.iter().zip(&l).all(|(a, b)| !a || *b));
            assert_eq!(Instance::parse(&i.to_text()).unwrap().edges, i.edges);
        }
        // Every (d, L, β) cell appears.
        let cells: std::collections::BTreeSet<String> = insts
            .iter()
            .filter(|i| i.label.starts_with("random"))
            .map(|i| i.label.split_once(' ').unwrap().1.split_once(' ').unwrap().1.to_string())
            .collect();
        assert_eq!(cells.len(), 24);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SweepConfig { instances: 20, adversarial: 5, ..Default::default() };
        assert_eq!(random_instances(&cfg).unwrap(), random_instances(&cfg).unwrap());
    }

    #[test]
    fn small_sweep_passes() {
        let cfg = SweepConfig { instances: 60, adversarial: 20, ..Default::default() };
        let s = run_sweep(&cfg).unwrap();
        assert_eq!(s.total_failures(), 0, "{:?}", s.failures);
        for c in [Check::Bk, Check::TreeBound, Check::SimonLieb, Check::ReversedSimonLieb] {
            assert!(s.tally(c).unwrap().total > 0);
        }
        assert!(s.min_error_term >= 0.0);
        assert!(s.max_summation_gap < 1e-12);
    }

    #[test]
    fn empty_sweep_is_empty() {
        let cfg = SweepConfig { instances: 0, adversarial: 0, ..Default::default() };
        let s = run_sweep(&cfg).unwrap();
        assert_eq!((s.instances, s.total_failures()), (0, 0));
    }
}
