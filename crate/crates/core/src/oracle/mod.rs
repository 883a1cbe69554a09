//! Exact verification of the correlation inequalities on enumerable
//! instances: BK, the tree-graph bound, the Simon–Lieb inequality and its
//! reversed form with the full error term, plus the convolution estimate.
//!
//! Every check returns an [`InequalityReport`]; `slack` is the amount by
//! which the claimed direction holds, and a check passes when
//! `slack >= -1e-9`.

pub mod convolution;
pub mod replay;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::error_term::{error_sums, prob_table, ErrorInputs, Summation};
use crate::percolation::disjoint::{disjoint_occurrence_pair, Event};
use crate::percolation::graph::{components, connect_prob_mask, connected, exact_tables, for_each_config, FiniteGraph};

pub use convolution::{convolution_bound, verify_convolution, ConvolutionReport};
pub use replay::Instance;
pub use sweep::{random_instances, run_sweep, verify_instance, SweepConfig, SweepSummary};

/// Smallest slack that still counts as a pass.
pub const SLACK_TOL: f64 = -1e-9;

/// Which inequality a report is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Check {
    Bk,
    TreeBound,
    SimonLieb,
    ReversedSimonLieb,
    Convolution,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Bk => "bk",
            Check::TreeBound => "tree-bound",
            Check::SimonLieb => "simon-lieb",
            Check::ReversedSimonLieb => "reversed-simon-lieb",
            Check::Convolution => "convolution",
        }
    }

    /// The claimed direction: every check is an upper bound except the
    /// reversed Simon–Lieb inequality.
    pub fn direction(self) -> Direction {
        match self {
            Check::ReversedSimonLieb => Direction::AtLeast,
            _ => Direction::AtMost,
        }
    }
}

/// Which side of the inequality is claimed to be larger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `lhs <= rhs`.
    AtMost,
    /// `lhs >= rhs`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub check: Check,
    /// What the inequality was evaluated on.
    pub instance: String,
    pub lhs: f64,
    pub rhs: f64,
    pub direction: Direction,
    /// `rhs - lhs` for `AtMost`, `lhs - rhs` for `AtLeast`.
    pub slack: f64,
    pub passed: bool,
}

impl InequalityReport {
    pub fn new(check: Check, instance: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let direction = check.direction();
        let slack = match direction {
            Direction::AtMost => rhs - lhs,
            Direction::AtLeast => lhs - rhs,
        };
        InequalityReport { check, instance: instance.into(), lhs, rhs, direction, slack, passed: slack >= SLACK_TOL }
    }
}

fn check_index(g: &FiniteGraph, i: usize, what: &str) -> Result<()> {
    if i >= g.n_sites() {
        return Err(Error::usage(format!("{what} index {i} is not a site")));
    }
    Ok(())
}

fn check_mask(g: &FiniteGraph, m: &[bool], what: &str) -> Result<()> {
    if m.len() != g.n_sites() {
        return Err(Error::usage(format!("{what} mask has {} entries for {} sites", m.len(), g.n_sites())));
    }
    Ok(())
}

/// `P[A ∘ B] <= P[A] P[B]` for each pair of connectivity events.
pub fn verify_bk(g: &FiniteGraph, pairs: &[(Event, Event)]) -> Result<Vec<InequalityReport>> {
    for &((a, b), (c, d)) in pairs {
        for i in [a, b, c, d] {
            check_index(g, i, "event endpoint")?;
        }
    }
    let mut joint = vec![0.0; pairs.len()];
    for_each_config(g, |cfg, w| {
        for (k, &(e1, e2)) in pairs.iter().enumerate() {
            if disjoint_occurrence_pair(g, cfg, e1, e2) {
                joint[k] += w;
            }
        }
    })?;
    let full = g.full_mask();
    pairs
        .iter()
        .zip(joint)
        .map(|(&(e1, e2), lhs)| {
            let pa = connect_prob_mask(g, &full, e1.0, e1.1)?;
            let pb = connect_prob_mask(g, &full, e2.0, e2.1)?;
            Ok(InequalityReport::new(
                Check::Bk,
                format!("{{{}<->{}}} o {{{}<->{}}}", e1.0, e1.1, e2.0, e2.1),
                lhs,
                pa * pb,
            ))
        })
        .collect()
}

/// `P[o ↔^S a, b] <= Σ_{u∈S} P[o ↔^S u] P[u ↔^S a] P[u ↔^S b]`.
pub fn verify_tree_bound(g: &FiniteGraph, o: usize, a: usize, b: usize, s: &[bool]) -> Result<InequalityReport> {
    check_mask(g, s, "S")?;
    for (i, w) in [(o, "o"), (a, "a"), (b, "b")] {
        check_index(g, i, w)?;
        if !s[i] {
            return Err(Error::usage(format!("{w} must lie in S")));
        }
    }
    let mut lhs = 0.0;
    for_each_config(g, |c, w| {
        let lab = components(g, c, s);
        if connected(&lab, s, o, a) && connected(&lab, s, o, b) {
            lhs += w;
        }
    })?;
    let t = &exact_tables(g, &[s])?[0];
    let rhs =
        crate::stats::kahan_sum((0..g.n_sites()).filter(|&u| s[u]).map(|u| t.get(o, u) * t.get(u, a) * t.get(u, b)));
    Ok(InequalityReport::new(Check::TreeBound, format!("o={o} a={a} b={b}"), lhs, rhs))
}

/// Both sides of the Simon–Lieb pair: `P[o ↔^Λ x]`, the main term
/// `P[o ↔^S x] + Σ_{y∈S, z∈Λ\S} P[o ↔^S y] p_yz P[z ↔^Λ x]`, and the error
/// `E_β(S, Λ, o, x)`.
struct SimonLiebSides {
    full: f64,
    main: f64,
    error: f64,
}

fn simon_lieb_sides(g: &FiniteGraph, s: &[bool], lambda: &[bool], o: usize, x: usize) -> Result<SimonLiebSides> {
    check_mask(g, s, "S")?;
    check_mask(g, lambda, "Λ")?;
    check_index(g, o, "o")?;
    check_index(g, x, "x")?;
    if s.iter().zip(lambda).any(|(&a, &b)| a && !b) {
        return Err(Error::usage("S must be a subset of Λ"));
    }
    if !s[o] || !lambda[x] {
        return Err(Error::usage("need o in S and x in Λ"));
    }
    let t = exact_tables(g, &[s, lambda])?;
    let (gs, gl) = (&t[0], &t[1]);
    let p = prob_table(g);
    let n = g.n_sites();
    let mut sum = crate::stats::kahan_sum(
        (0..n)
            .filter(|&y| s[y])
            .flat_map(|y| (0..n).filter(|&z| lambda[z] && !s[z]).map(move |z| (y, z)))
            .map(|(y, z)| gs.get(o, y) * p.get(y, z) * gl.get(z, x)),
    );
    sum += gs.get(o, x);
    let err = error_sums(&ErrorInputs { gs, gl, guv: gs, p: &p, s, lambda, o, x: Some(x) }, Summation::Kahan);
    Ok(SimonLiebSides { full: gl.get(o, x), main: sum, error: err.total() })
}

/// `P[o ↔^Λ x] <= P[o ↔^S x] + Σ_{y∈S, z∈Λ\S} P[o ↔^S y] p_yz P[z ↔^Λ x]`.
pub fn verify_simon_lieb(g: &FiniteGraph, s: &[bool], lambda: &[bool], o: usize, x: usize) -> Result<InequalityReport> {
    let sides = simon_lieb_sides(g, s, lambda, o, x)?;
    Ok(InequalityReport::new(Check::SimonLieb, format!("o={o} x={x}"), sides.full, sides.main))
}

/// `P[o ↔^Λ x] >= P[o ↔^S x] + Σ … - E_β(S, Λ, o, x)`.
pub fn verify_reversed(g: &FiniteGraph, s: &[bool], lambda: &[bool], o: usize, x: usize) -> Result<InequalityReport> {
    let sides = simon_lieb_sides(g, s, lambda, o, x)?;
    Ok(InequalityReport::new(Check::ReversedSimonLieb, format!("o={o} x={x}"), sides.full, sides.main - sides.error))
}

/// Both Simon–Lieb directions from a single enumeration.
pub fn verify_simon_lieb_both(
    g: &FiniteGraph,
    s: &[bool],
    lambda: &[bool],
    o: usize,
    x: usize,
) -> Result<[InequalityReport; 2]> {
    let sides = simon_lieb_sides(g, s, lambda, o, x)?;
    let what = format!("o={o} x={x}");
    Ok([
        InequalityReport::new(Check::SimonLieb, what.clone(), sides.full, sides.main),
        InequalityReport::new(Check::ReversedSimonLieb, what, sides.full, sides.main - sides.error),
    ])
}

/// `E_β(S, Λ, o, x)` evaluated exactly (useful for nonnegativity checks).
pub fn exact_error(g: &FiniteGraph, s: &[bool], lambda: &[bool], o: usize, x: usize) -> Result<f64> {
    Ok(simon_lieb_sides(g, s, lambda, o, x)?.error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;

    fn p1(x: i64) -> Point {
        Point::new(&[x]).unwrap()
    }

    fn line(n: i64, edges: Vec<(usize, usize, f64)>) -> FiniteGraph {
        FiniteGraph::new((0..n).map(p1).collect(), edges).unwrap()
    }

    #[test]
    fn single_edge_bk() {
        let g = line(2, vec![(0, 1, 0.4)]);
        let r = verify_bk(&g, &[((0, 1), (0, 1))]).unwrap();
        assert_eq!(r[0].lhs, 0.0);
        assert!((r[0].rhs - 0.16).abs() < 1e-15 && r[0].passed);
    }

    #[test]
    fn four_cycle_bk_matches_enumeration() {
        // a=0, c=2 on the cycle 0-1-2-3-0. A∘A needs both arcs open: p⁴.
        // P[a ↔ c] = 1 - (1 - p²)² by inclusion–exclusion over the arcs.
        let p = 0.6;
        let sites = vec![
            Point::new(&[0, 0]).unwrap(),
            Point::new(&[1, 0]).unwrap(),
            Point::new(&[1, 1]).unwrap(),
            Point::new(&[0, 1]).unwrap(),
        ];
        let g = FiniteGraph::new(sites, vec![(0, 1, p), (1, 2, p), (2, 3, p), (3, 0, p)]).unwrap();
        let r = &verify_bk(&g, &[((0, 2), (0, 2))]).unwrap()[0];
        assert!((r.lhs - p.powi(4)).abs() < 1e-14);
        let conn = 1.0 - (1.0 - p * p).powi(2);
        assert!((r.rhs - conn * conn).abs() < 1e-14);
        assert!(r.passed);
    }

    #[test]
    fn independent_events_give_equality() {
        let g = line(4, vec![(0, 1, 0.3), (2, 3, 0.7)]);
        let r = &verify_bk(&g, &[((0, 1), (2, 3))]).unwrap()[0];
        assert!((r.lhs - r.rhs).abs() < 1e-15);
    }

    #[test]
    fn tree_bound_trivial_and_two_site() {
        let g = line(2, vec![(0, 1, 0.25)]);
        let all = vec![true, true];
        let r = verify_tree_bound(&g, 0, 0, 0, &all).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.rhs >= 1.0);
        let r = verify_tree_bound(&g, 0, 1, 1, &all).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-15);
        assert!((r.rhs - (0.25 * 0.25 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn simon_lieb_three_sites() {
        // d = 1, L = 2 on {0, 1, 2}: three edges, eight configurations.
        // With S = {0}: main = p_01 G(1,2) + p_02, where G(1,2) = P[1 ↔ 2].
        let p = 0.35;
        let g = line(3, vec![(0, 1, p), (0, 2, p), (1, 2, p)]);
        let s = vec![true, false, false];
        let all = vec![true; 3];
        let r = verify_simon_lieb(&g, &s, &all, 0, 2).unwrap();
        let g12 = p + (1.0 - p) * p * p;
        let g02 = p + (1.0 - p) * p * p;
        assert!((r.lhs - g02).abs() < 1e-15);
        assert!((r.rhs - (p * g12 + p)).abs() < 1e-15);
        assert!(r.passed);
        let rev = verify_reversed(&g, &s, &all, 0, 2).unwrap();
        assert!(rev.passed, "{rev:?}");
    }

    #[test]
    fn s_equal_lambda_is_trivial() {
        let g = line(3, vec![(0, 1, 0.5), (1, 2, 0.5)]);
        let all = vec![true; 3];
        let r = verify_simon_lieb(&g, &all, &all, 0, 2).unwrap();
        assert_eq!(r.lhs, r.rhs);
        let r = verify_reversed(&g, &all, &all, 0, 2).unwrap();
        assert_eq!(r.lhs, r.rhs);
    }

    #[test]
    fn zero_probability_sandwich_is_tight() {
        let g = line(3, vec![(0, 1, 0.0), (1, 2, 0.0)]);
        let s = vec![true, true, false];
        let all = vec![true; 3];
        for x in 0..3 {
            let a = verify_simon_lieb(&g, &s, &all, 0, x).unwrap();
            let b = verify_reversed(&g, &s, &all, 0, x).unwrap();
            let ind = (x == 0) as u8 as f64;
            assert_eq!((a.lhs, a.rhs, b.rhs), (ind, ind, ind));
        }
    }

    #[test]
    fn report_tolerance() {
        assert!(InequalityReport::new(Check::Bk, "t", 1.0 + 5e-10, 1.0).passed);
        assert!(!InequalityReport::new(Check::Bk, "t", 1.0 + 2e-9, 1.0).passed);
        assert!(!InequalityReport::new(Check::ReversedSimonLieb, "t", 1.0, 1.0 + 2e-9).passed);
    }
}
