//! Self-contained plain-text instances for the exact checks.
//!
//! One directive per line; `#` starts a comment and blank lines are
//! ignored. Sites are numbered in order of appearance, starting at 0.
//!
//! ```text
//! d 1                 # dimension, first directive
//! site 0              # one coordinate per dimension
//! site 1
//! site 2
//! edge 0 1 0.25       # site indices and the edge probability
//! edge 1 2 0.25
//! region S 0          # named site sets: S and L (for Λ) are used
//! region L 0 1 2
//! point o 0           # named sites: o, x, a, b are used
//! point x 2
//! event 0 2           # connectivity event {0 ↔ 2}
//! ```
//!
//! The checks run on an instance are determined by what it declares:
//! BK for every ordered pair of events, the tree bound when `S`, `o`, `a`
//! and `b` are present, and both Simon–Lieb directions when `S`, `L`, `o`
//! and `x` are present. A missing `L` means all sites.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::percolation::disjoint::Event;
use crate::percolation::graph::FiniteGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Free-form label carried into report descriptors.
    pub label: String,
    pub dim: usize,
    pub sites: Vec<Vec<i64>>,
    pub edges: Vec<(usize, usize, f64)>,
    pub regions: BTreeMap<String, Vec<usize>>,
    pub points: BTreeMap<String, usize>,
    pub events: Vec<Event>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

impl Instance {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Instance {
            label: label.into(),
            dim,
            sites: Vec::new(),
            edges: Vec::new(),
            regions: BTreeMap::new(),
            points: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut inst: Option<Instance> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            let (head, args) = (toks[0], &toks[1..]);
            if head == "d" {
                if inst.is_some() {
                    return Err(parse_err(line, "dimension declared twice"));
                }
                let [d] = args else { return Err(parse_err(line, "expected 'd <dim>'")) };
                let d: usize = num(d, line, "dimension")?;
                if d == 0 {
                    return Err(parse_err(line, "dimension must be positive"));
                }
                inst = Some(Instance::new("", d));
                continue;
            }
            if head == "label" {
                let i = inst.as_mut().ok_or_else(|| parse_err(line, "'d' must come first"))?;
                i.label = args.join(" ");
                continue;
            }
            let i = inst.as_mut().ok_or_else(|| parse_err(line, "'d' must come first"))?;
            let n = i.sites.len();
            let site = |t: &str| -> Result<usize> {
                let s: usize = num(t, line, "site index")?;
                if s >= n {
                    return Err(parse_err(line, format!("site {s} not declared yet")));
                }
                Ok(s)
            };
            match head {
                "site" => {
                    if args.len() != i.dim {
                        return Err(parse_err(line, format!("site needs {} coordinates", i.dim)));
                    }
                    let c = args.iter().map(|t| num(t, line, "coordinate")).collect::<Result<Vec<i64>>>()?;
                    i.sites.push(c);
                }
                "edge" => {
                    let [a, b, p] = args else { return Err(parse_err(line, "expected 'edge i j p'")) };
                    let p: f64 = num(p, line, "probability")?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(parse_err(line, format!("probability {p} outside [0,1]")));
                    }
                    i.edges.push((site(a)?, site(b)?, p));
                }
                "region" => {
                    let Some((name, ids)) = args.split_first() else {
                        return Err(parse_err(line, "expected 'region NAME ids...'"));
                    };
                    let ids = ids.iter().map(|t| site(t)).collect::<Result<Vec<_>>>()?;
                    if i.regions.insert(name.to_string(), ids).is_some() {
                        return Err(parse_err(line, format!("region {name} declared twice")));
                    }
                }
                "point" => {
                    let [name, id] = args else { return Err(parse_err(line, "expected 'point NAME id'")) };
                    let id = site(id)?;
                    if i.points.insert(name.to_string(), id).is_some() {
                        return Err(parse_err(line, format!("point {name} declared twice")));
                    }
                }
                "event" => {
                    let [a, b] = args else { return Err(parse_err(line, "expected 'event a b'")) };
                    i.events.push((site(a)?, site(b)?));
                }
                other => return Err(parse_err(line, format!("unknown directive '{other}'"))),
            }
        }
        let inst = inst.ok_or_else(|| parse_err(0, "empty instance"))?;
        inst.graph().map_err(|e| parse_err(0, e.to_string()))?;
        Ok(inst)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "d {}", self.dim);
        if !self.label.is_empty() {
            let _ = writeln!(s, "label {}", self.label);
        }
        for c in &self.sites {
            let cs: Vec<String> = c.iter().map(i64::to_string).collect();
            let _ = writeln!(s, "site {}", cs.join(" "));
        }
        for &(a, b, p) in &self.edges {
            // `{:?}` prints the shortest string that round-trips exactly.
            let _ = writeln!(s, "edge {a} {b} {p:?}");
        }
        for (name, ids) in &self.regions {
            let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "region {name} {}", ids.join(" "));
        }
        for (name, id) in &self.points {
            let _ = writeln!(s, "point {name} {id}");
        }
        for &(a, b) in &self.events {
            let _ = writeln!(s, "event {a} {b}");
        }
        s
    }

    pub fn graph(&self) -> Result<FiniteGraph> {
        let sites = self.sites.iter().map(|c| Point::new(c)).collect::<Result<Vec<_>>>()?;
        FiniteGraph::new(sites, self.edges.clone())
    }

    /// Membership mask of a named region, or `None` if undeclared.
    pub fn mask(&self, name: &str) -> Option<Vec<bool>> {
        self.regions.get(name).map(|ids| {
            let mut m = vec![false; self.sites.len()];
            for &i in ids {
                m[i] = true;
            }
            m
        })
    }

    pub fn point(&self, name: &str) -> Option<usize> {
        self.points.get(name).copied()
    }
}
