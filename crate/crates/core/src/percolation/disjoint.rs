//! Disjoint occurrence `A ∘ B` of connectivity events in a fixed
//! configuration: the events must have edge-disjoint open witnesses.
//!
//! For an increasing connectivity event `{x ↔ y}` a minimal witness is a
//! simple open path (empty when `x = y`), so deciding `∘` reduces to
//! searching for edge-disjoint paths.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::percolation::graph::{EdgeConfig, FiniteGraph};

/// Largest number of open edges [`disjoint_occurrence_multi`] will search.
pub const MAX_MULTI_OPEN_EDGES: usize = 20;

/// A connectivity event `{a ↔ b}` on site indices.
pub type Event = (usize, usize);

fn adjacency(g: &FiniteGraph, usable: u64) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); g.n_sites()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        if usable >> e & 1 == 1 {
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
    }
    adj
}

fn reachable(adj: &[Vec<(usize, usize)>], usable: u64, a: usize, b: usize) -> bool {
    if a == b {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([a]);
    seen[a] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, e) in &adj[u] {
            if usable >> e & 1 == 1 && !seen[v] {
                if v == b {
                    return true;
                }
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    false
}

/// Number of edge-disjoint `a`–`b` paths in the undirected graph of usable
/// edges, capped at `limit` (unit-capacity augmenting paths, Menger).
pub fn edge_disjoint_paths(g: &FiniteGraph, usable: u64, a: usize, b: usize, limit: usize) -> usize {
    if a == b {
        return limit;
    }
    let adj = adjacency(g, usable);
    // flow[e] ∈ {-1, 0, 1}: +1 means one unit goes from edges[e].0 to edges[e].1.
    let mut flow = vec![0i8; g.n_edges()];
    let mut count = 0;
    while count < limit {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; g.n_sites()];
        let mut seen = vec![false; g.n_sites()];
        seen[a] = true;
        let mut queue = VecDeque::from([a]);
        while let Some(u) = queue.pop_front() {
            if u == b {
                break;
            }
            for &(v, e) in &adj[u] {
                let forward = g.edges()[e].0 == u;
                let residual = if forward { flow[e] < 1 } else { flow[e] > -1 };
                if residual && !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, e));
                    queue.push_back(v);
                }
            }
        }
        if !seen[b] {
            break;
        }
        let mut v = b;
        while let Some((u, e)) = prev[v] {
            flow[e] += if g.edges()[e].0 == u { 1 } else { -1 };
            v = u;
        }
        count += 1;
    }
    count
}

/// Calls `f(path_edges)` for every simple path from `a` to `b` using
/// `usable` edges; stops early when `f` returns `true`. Returns whether it
/// stopped early.
fn any_simple_path(
    adj: &[Vec<(usize, usize)>],
    usable: u64,
    a: usize,
    b: usize,
    f: &mut dyn FnMut(u64) -> bool,
) -> bool {
    fn rec(
        adj: &[Vec<(usize, usize)>],
        usable: u64,
        u: usize,
        b: usize,
        on_path: &mut Vec<bool>,
        used: u64,
        f: &mut dyn FnMut(u64) -> bool,
    ) -> bool {
        if u == b {
            return f(used);
        }
        for &(v, e) in &adj[u] {
            if usable >> e & 1 == 1 && !on_path[v] {
                on_path[v] = true;
                let stop = rec(adj, usable, v, b, on_path, used | 1 << e, f);
                on_path[v] = false;
                if stop {
                    return true;
                }
            }
        }
        false
    }
    let mut on_path = vec![false; adj.len()];
    on_path[a] = true;
    rec(adj, usable, a, b, &mut on_path, 0, f)
}

/// `{x₁ ↔ y₁} ∘ {x₂ ↔ y₂}` in configuration `config`.
///
/// Identical events are decided by a two-unit max-flow (two edge-disjoint
/// paths between the same endpoints). Distinct events are decided exactly by
/// enumerating simple open paths for the first event and testing the second
/// in the remaining open edges.
pub fn disjoint_occurrence_pair(g: &FiniteGraph, config: EdgeConfig, e1: Event, e2: Event) -> bool {
    let open = config.0;
    let adj = adjacency(g, open);
    let trivial = |(a, b): Event| a == b;
    if trivial(e1) {
        return reachable(&adj, open, e2.0, e2.1);
    }
    if trivial(e2) {
        return reachable(&adj, open, e1.0, e1.1);
    }
    let same = (e1.0 == e2.0 && e1.1 == e2.1) || (e1.0 == e2.1 && e1.1 == e2.0);
    if same {
        return edge_disjoint_paths(g, open, e1.0, e1.1, 2) >= 2;
    }
    any_simple_path(&adj, open, e1.0, e1.1, &mut |used| reachable(&adj, open & !used, e2.0, e2.1))
}

/// Disjoint occurrence of up to three connectivity events: a recursive
/// search assigning to each event in turn a simple open path among the edges
/// not yet claimed by earlier events.
pub fn disjoint_occurrence_multi(g: &FiniteGraph, config: EdgeConfig, events: &[Event]) -> Result<bool> {
    if events.len() > 3 {
        return Err(Error::usage("at most three events are supported"));
    }
    let open_count = config.0.count_ones() as usize;
    if open_count > MAX_MULTI_OPEN_EDGES {
        return Err(Error::capacity(format!("{open_count} open edges exceed the limit of {MAX_MULTI_OPEN_EDGES}")));
    }
    let adj = adjacency(g, config.0);
    fn rec(adj: &[Vec<(usize, usize)>], free: u64, events: &[Event]) -> bool {
        let Some((&(a, b), rest)) = events.split_first() else {
            return true;
        };
        if a == b {
            return rec(adj, free, rest);
        }
        any_simple_path(adj, free, a, b, &mut |used| rec(adj, free & !used, rest))
    }
    Ok(rec(&adj, config.0, events))
}

/// Literal definition of `∘` for small graphs: try every assignment of the
/// open edges to at most one of the events and test each event inside its
/// own edge set. Exponential; used as a cross-check.
pub fn disjoint_occurrence_brute(g: &FiniteGraph, config: EdgeConfig, events: &[Event]) -> bool {
    let open: Vec<usize> = config.open_edges(g);
    let k = events.len() as u64;
    let total = (k + 1).pow(open.len() as u32);
    let all = adjacency(g, config.0);
    for code in 0..total {
        let mut sets = vec![0u64; events.len()];
        let mut c = code;
        for &e in &open {
            let label = c % (k + 1);
            c /= k + 1;
            if label > 0 {
                sets[(label - 1) as usize] |= 1 << e;
            }
        }
        if events.iter().zip(&sets).all(|(&(a, b), &s)| reachable(&all, s, a, b)) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;

    fn graph(n: usize, edges: &[(usize, usize)]) -> FiniteGraph {
        let sites = (0..n).map(|i| Point::new(&[i as i64]).unwrap()).collect();
        FiniteGraph::new(sites, edges.iter().map(|&(a, b)| (a, b, 0.5)).collect()).unwrap()
    }

    #[test]
    fn four_cycle_opposite_corners() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let all = EdgeConfig(0b1111);
        assert!(disjoint_occurrence_pair(&g, all, (0, 2), (0, 2)));
        assert!(!disjoint_occurrence_pair(&g, EdgeConfig(0b0111), (0, 2), (0, 2)));
    }

    #[test]
    fn single_edge_cannot_be_reused() {
        let g = graph(2, &[(0, 1)]);
        assert!(!disjoint_occurrence_pair(&g, EdgeConfig(1), (0, 1), (0, 1)));
        assert!(!disjoint_occurrence_pair(&g, EdgeConfig(1), (0, 1), (1, 0)));
    }

    #[test]
    fn path_with_shared_middle() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        assert!(disjoint_occurrence_pair(&g, EdgeConfig(0b11), (0, 1), (1, 2)));
        assert!(!disjoint_occurrence_pair(&g, EdgeConfig(0b11), (0, 2), (1, 2)));
    }

    #[test]
    fn trivial_events() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        assert!(disjoint_occurrence_multi(&g, EdgeConfig(0), &[(0, 0), (1, 1), (2, 2)]).unwrap());
        assert!(disjoint_occurrence_pair(&g, EdgeConfig(0b01), (2, 2), (0, 1)));
    }

    #[test]
    fn star_three_spokes() {
        // u = 0, spokes to o = 1, a = 2, b = 3.
        let g = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        assert!(disjoint_occurrence_multi(&g, EdgeConfig(0b111), &[(1, 0), (0, 2), (0, 3)]).unwrap());
        assert!(!disjoint_occurrence_multi(&g, EdgeConfig(0b111), &[(1, 0), (1, 2), (0, 3)]).unwrap());
    }

    #[test]
    fn multi_matches_pair_and_brute_force_exhaustively() {
        let graphs = [
            graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]),
            graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3), (0, 2), (2, 4)]),
            graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (2, 3), (1, 3)]),
        ];
        for g in &graphs {
            let n = g.n_sites();
            for c in 0..(1u64 << g.n_edges()) {
                let cfg = EdgeConfig(c);
                for a in 0..n {
                    for b in 0..n {
                        for x in 0..n {
                            for y in 0..n {
                                let pair = disjoint_occurrence_pair(g, cfg, (a, b), (x, y));
                                let multi = disjoint_occurrence_multi(g, cfg, &[(a, b), (x, y)]).unwrap();
                                assert_eq!(pair, multi, "config {c:b} events {a}{b} {x}{y}");
                                if (a + b + x + y + c as usize).is_multiple_of(7) {
                                    assert_eq!(pair, disjoint_occurrence_brute(g, cfg, &[(a, b), (x, y)]));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn three_events_match_brute_force() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]);
        for c in 0..(1u64 << g.n_edges()) {
            let cfg = EdgeConfig(c);
            for o in 0..5 {
                for u in 0..5 {
                    let ev = [(o, u), (u, (o + 2) % 5), (u, (o + 3) % 5)];
                    assert_eq!(
                        disjoint_occurrence_multi(&g, cfg, &ev).unwrap(),
                        disjoint_occurrence_brute(&g, cfg, &ev)
                    );
                }
            }
        }
    }

    #[test]
    fn menger_counts() {
        let g = graph(4, &[(0, 1), (1, 3), (0, 2), (2, 3), (0, 3)]);
        assert_eq!(edge_disjoint_paths(&g, 0b11111, 0, 3, 5), 3);
        assert_eq!(edge_disjoint_paths(&g, 0b01111, 0, 3, 5), 2);
    }
}
