//! Lattice geometry on `Z^d` with the ℓ∞ norm, regions, and the spread-out
//! kernel `J(u, v) = c_L 1{1 <= |u - v| <= L}`.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension. Eight 16-bit coordinates pack into a `u128`.
pub const MAX_DIM: usize = 8;

/// Largest offset table [`SpreadOutModel::offsets`] will materialize.
pub const MAX_OFFSETS: u64 = 20_000_000;

/// A site of `Z^d`, `1 <= d <= 8`, with 16-bit coordinates.
///
/// Unused trailing coordinates are always zero, so the packed [`Point::key`]
/// is injective for a fixed dimension.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    coords: [i16; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[i64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::usage(format!("dimension {} outside 1..={MAX_DIM}", coords.len())));
        }
        let mut c = [0i16; MAX_DIM];
        for (slot, &v) in c.iter_mut().zip(coords) {
            *slot = i16::try_from(v).map_err(|_| Error::usage(format!("coordinate {v} does not fit in 16 bits")))?;
        }
        Ok(Point { coords: c, dim: coords.len() as u8 })
    }

    pub fn origin(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension {d} outside 1..={MAX_DIM}");
        Point { coords: [0; MAX_DIM], dim: d as u8 }
    }

    /// `n e_axis` (axis is zero-based).
    pub fn axis(d: usize, axis: usize, n: i64) -> Self {
        let mut p = Point::origin(d);
        assert!(axis < d);
        p.coords[axis] = i16::try_from(n).expect("coordinate out of 16-bit range");
        p
    }

    pub(crate) fn from_raw(coords: [i16; MAX_DIM], dim: usize) -> Self {
        Point { coords, dim: dim as u8 }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i16] {
        &self.coords[..self.dim()]
    }

    #[inline]
    pub fn raw(&self) -> &[i16; MAX_DIM] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, i: usize) -> i64 {
        self.coords[i] as i64
    }

    pub fn with(&self, i: usize, v: i64) -> Self {
        let mut p = *self;
        p.coords[i] = v as i16;
        p
    }

    #[inline]
    pub fn is_origin(&self) -> bool {
        self.coords == [0; MAX_DIM]
    }

    /// ℓ∞ norm.
    #[inline]
    pub fn linf(&self) -> i64 {
        self.coords.iter().map(|c| (*c as i64).abs()).max().unwrap_or(0)
    }

    /// Squared Euclidean norm.
    #[inline]
    pub fn l2_sq(&self) -> i64 {
        self.coords.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    /// Packs the coordinates into a single 128-bit key.
    #[inline]
    pub fn key(&self) -> u128 {
        let mut k = 0u128;
        for &c in &self.coords {
            k = (k << 16) | (c as u16 as u128);
        }
        k
    }

    /// Canonical representative of the orbit under coordinate permutations
    /// and reflections: absolute values sorted in decreasing order.
    pub fn canonical(&self) -> Point {
        let mut c = [0i16; MAX_DIM];
        let d = self.dim();
        for (ci, &x) in c.iter_mut().zip(&self.coords[..d]) {
            *ci = x.abs();
        }
        c[..d].sort_unstable_by(|a, b| b.cmp(a));
        Point { coords: c, dim: self.dim }
    }

    /// Size of the orbit of `self` under the hyperoctahedral group.
    pub fn orbit_size(&self) -> u64 {
        let c = self.canonical();
        let d = self.dim();
        let mut size = factorial(d as u64);
        let mut i = 0;
        while i < d {
            let mut j = i;
            while j < d && c.coords[j] == c.coords[i] {
                j += 1;
            }
            size /= factorial((j - i) as u64);
            if c.coords[i] != 0 {
                size <<= j - i;
            }
            i = j;
        }
        size
    }

    pub(crate) fn check_dim(&self, other: &Point) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::usage(format!("dimension mismatch: {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }
}

fn factorial(n: u64) -> u64 {
    (1..=n).product::<u64>().max(1)
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(rhs.coords) {
            *a += b;
        }
        Point { coords: c, dim: self.dim }
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(rhs.coords) {
            *a -= b;
        }
        Point { coords: c, dim: self.dim }
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        let mut c = self.coords;
        for a in c.iter_mut() {
            *a = -*a;
        }
        Point { coords: c, dim: self.dim }
    }
}

/// Bound used for an infinite block extent. Far outside any reachable
/// coordinate, so membership and distances need no special case.
pub const INFINITE_EXTENT: i64 = 1 << 40;

/// A generalized block `prod [a_i, b_i]` with `a_i <= 0 <= b_i`; either end
/// may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    lo: [i64; MAX_DIM],
    hi: [i64; MAX_DIM],
    dim: usize,
}

impl Block {
    /// `None` stands for an infinite end.
    pub fn new(lo: &[Option<i64>], hi: &[Option<i64>]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_DIM {
            return Err(Error::usage("block bounds must have equal length in 1..=8"));
        }
        let mut b = Block { lo: [0; MAX_DIM], hi: [0; MAX_DIM], dim: lo.len() };
        for i in 0..lo.len() {
            let a = lo[i].unwrap_or(-INFINITE_EXTENT);
            let c = hi[i].unwrap_or(INFINITE_EXTENT);
            if a > 0 || c < 0 {
                return Err(Error::usage(format!("block axis {i} must satisfy a <= 0 <= b, got [{a}, {c}]")));
            }
            b.lo[i] = a.max(-INFINITE_EXTENT);
            b.hi[i] = c.min(INFINITE_EXTENT);
        }
        Ok(b)
    }

    /// The box `Λ_n` as a block.
    pub fn cube(d: usize, n: i64) -> Result<Self> {
        let lo = vec![Some(-n); d];
        let hi = vec![Some(n); d];
        Block::new(&lo, &hi)
    }

    /// `H_n = {x_1 >= -n}` as a block.
    pub fn half_space(d: usize, n: i64) -> Result<Self> {
        let mut lo = vec![None; d];
        lo[0] = Some(-n);
        Block::new(&lo, &vec![None; d])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self, i: usize) -> Option<i64> {
        (self.lo[i] > -INFINITE_EXTENT).then_some(self.lo[i])
    }

    pub fn upper(&self, i: usize) -> Option<i64> {
        (self.hi[i] < INFINITE_EXTENT).then_some(self.hi[i])
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| self.lower(i).is_some() && self.upper(i).is_some())
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|i| {
            let c = x.get(i);
            self.lo[i] <= c && c <= self.hi[i]
        })
    }

    /// ℓ∞ distance from `x ∈ B` to the boundary `∂B`; `∂^k B` is the level set.
    pub fn boundary_distance(&self, x: &Point) -> Result<i64> {
        if x.dim() != self.dim {
            return Err(Error::usage("dimension mismatch between block and point"));
        }
        if !self.contains(x) {
            return Err(Error::usage(format!("{x} is not in the block")));
        }
        Ok((0..self.dim).map(|i| (x.get(i) - self.lo[i]).min(self.hi[i] - x.get(i))).min().unwrap_or(0))
    }

    /// Number of sites `z ∉ B` with `1 <= |z - y| <= range`, for `y ∈ B`.
    pub fn exterior_count(&self, y: &Point, range: i64) -> u64 {
        let full = (2 * range + 1).pow(self.dim as u32) as u64;
        let inside: u64 = (0..self.dim)
            .map(|i| {
                let a = (y.get(i) - range).max(self.lo[i]);
                let b = (y.get(i) + range).min(self.hi[i]);
                (b - a + 1).max(0) as u64
            })
            .product();
        full - inside
    }
}

/// Regions of the lattice that clusters and walks are restricted to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `Λ_n(center)`.
    Box {
        center: Point,
        radius: i64,
    },
    /// `H_n = -n e_1 + H`, i.e. `{x : x_1 >= -n}`.
    HalfSpace {
        shift: i64,
    },
    Block(Block),
    Full,
    /// The discrete torus of even side length, coordinates taken in
    /// `[-side/2, side/2)`.
    Torus {
        side: i64,
    },
}

// Points are not (de)serialized through serde elsewhere; a flat vector is enough.
impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<i64> = Vec::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

impl Region {
    pub fn cube(d: usize, radius: i64) -> Region {
        Region::Box { center: Point::origin(d), radius }
    }

    pub fn torus(side: i64) -> Result<Region> {
        if side < 2 || side % 2 != 0 {
            return Err(Error::usage(format!("torus side must be even and >= 2, got {side}")));
        }
        Ok(Region::Torus { side })
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Region::Box { center, radius } => (*x - *center).linf() <= *radius,
            Region::HalfSpace { shift } => x.get(0) >= -shift,
            Region::Block(b) => b.contains(x),
            Region::Full | Region::Torus { .. } => true,
        }
    }

    /// Reduces coordinates into the fundamental domain of a torus; identity
    /// for every other region.
    #[inline]
    pub fn wrap(&self, x: Point) -> Point {
        match self {
            Region::Torus { side } => {
                let half = side / 2;
                let mut c = *x.raw();
                for v in c.iter_mut().take(x.dim()) {
                    *v = ((*v as i64 + half).rem_euclid(*side) - half) as i16;
                }
                Point::from_raw(c, x.dim())
            }
            _ => x,
        }
    }

    /// `x ∈ ∂S`: `x ∈ S` and some site at ℓ∞ distance 1 lies outside `S`.
    pub fn is_boundary(&self, x: &Point) -> bool {
        if !self.contains(x) {
            return false;
        }
        match self {
            Region::Box { center, radius } => (*x - *center).linf() == *radius,
            Region::HalfSpace { shift } => x.get(0) == -shift,
            Region::Block(b) => b.boundary_distance(x).map(|k| k == 0).unwrap_or(false),
            Region::Full | Region::Torus { .. } => false,
        }
    }

    /// Number of sites in a dense-indexable region (boxes and tori).
    pub fn dense_len(&self, d: usize) -> Option<usize> {
        match self {
            Region::Box { radius, .. } => Some(((2 * radius + 1) as usize).pow(d as u32)),
            Region::Torus { side } => Some((*side as usize).pow(d as u32)),
            _ => None,
        }
    }

    /// Row-major index of `x` for boxes and tori; `None` elsewhere or if
    /// `x` lies outside.
    pub fn dense_index(&self, x: &Point) -> Option<usize> {
        let (origin, width) = match self {
            Region::Box { center, radius } => {
                if !self.contains(x) {
                    return None;
                }
                (*center - Point::from_raw([*radius as i16; MAX_DIM], x.dim()), 2 * radius + 1)
            }
            Region::Torus { side } => {
                let half = (side / 2) as i16;
                (Point::from_raw([-half; MAX_DIM], x.dim()), *side)
            }
            _ => return None,
        };
        let y = self.wrap(*x) - origin;
        let mut idx = 0usize;
        for i in 0..x.dim() {
            idx = idx * width as usize + y.get(i) as usize;
        }
        Some(idx)
    }

    /// Level of `x` in the nested family this region belongs to: boxes
    /// `Λ_k` grow with the ℓ∞ norm, half-spaces `H_k` with `-x_1`.
    pub fn family_level(&self, x: &Point) -> Option<i64> {
        match self {
            Region::Box { .. } => Some(x.linf()),
            Region::HalfSpace { .. } => Some((-x.get(0)).max(0)),
            _ => None,
        }
    }

    /// Number of sites `z ∉ S` with `1 <= |z - y| <= range`, for `y ∈ S`.
    pub fn exterior_count(&self, y: &Point, range: i64) -> u64 {
        let d = y.dim() as u32;
        match self {
            Region::Box { center, radius } => {
                let r = *y - *center;
                let full = (2 * range + 1).pow(d) as u64;
                let inside: u64 = (0..y.dim())
                    .map(|i| {
                        let a = (r.get(i) - range).max(-radius);
                        let b = (r.get(i) + range).min(*radius);
                        (b - a + 1).max(0) as u64
                    })
                    .product();
                full - inside
            }
            Region::HalfSpace { shift } => {
                let below = (-shift - (y.get(0) - range)).clamp(0, 2 * range + 1) as u64;
                below * (2 * range + 1).pow(d - 1) as u64
            }
            Region::Block(b) => b.exterior_count(y, range),
            Region::Full | Region::Torus { .. } => 0,
        }
    }
}

/// Spread-out Bernoulli bond percolation on `Z^d` with range `L` at
/// inverse temperature `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadOutModel {
    d: usize,
    range: i64,
    beta: f64,
    c_l: f64,
    p_beta: f64,
}

impl SpreadOutModel {
    pub fn new(d: usize, range: i64, beta: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::usage(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if !(1..=1000).contains(&range) {
            return Err(Error::usage(format!("range L={range} outside 1..=1000")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::usage(format!("beta must be finite and >= 0, got {beta}")));
        }
        let c_l = 1.0 / neighborhood_size(d, range);
        Ok(SpreadOutModel { d, range, beta, c_l, p_beta: -(-beta * c_l).exp_m1() })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        SpreadOutModel::new(self.d, self.range, beta)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn range(&self) -> i64 {
        self.range
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `c_L = 1 / |Λ_L^*|`.
    pub fn c_l(&self) -> f64 {
        self.c_l
    }

    /// `p_β = 1 - exp(-β c_L)`, the probability of any edge in the kernel support.
    pub fn p_beta(&self) -> f64 {
        self.p_beta
    }

    /// `|Λ_L^*| = (2L+1)^d - 1`.
    pub fn neighborhood_size(&self) -> f64 {
        neighborhood_size(self.d, self.range)
    }

    pub fn origin(&self) -> Point {
        Point::origin(self.d)
    }

    fn check(&self, u: &Point, v: &Point) -> Result<()> {
        u.check_dim(v)?;
        if u.dim() != self.d {
            return Err(Error::usage(format!("point dimension {} does not match model dimension {}", u.dim(), self.d)));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn in_support(&self, u: &Point, v: &Point) -> bool {
        let r = (*u - *v).linf();
        1 <= r && r <= self.range
    }

    pub fn kernel(&self, u: &Point, v: &Point) -> Result<f64> {
        self.check(u, v)?;
        Ok(if self.in_support(u, v) { self.c_l } else { 0.0 })
    }

    pub fn edge_probability(&self, u: &Point, v: &Point) -> Result<f64> {
        self.check(u, v)?;
        Ok(if self.in_support(u, v) { self.p_beta } else { 0.0 })
    }

    /// The sites `v` with `1 <= |v - x| <= L`, in lexicographic order of the offset.
    pub fn neighborhood(&self, x: Point) -> Neighborhood {
        assert_eq!(x.dim(), self.d, "point dimension does not match model");
        Neighborhood::new(x, self.range)
    }

    /// The offsets of `Λ_L^*` as a table, in the same order as [`Self::neighborhood`].
    pub fn offsets(&self) -> Result<Vec<Point>> {
        let n = self.neighborhood_size();
        if n > MAX_OFFSETS as f64 {
            return Err(Error::capacity(format!("offset table of {n} entries exceeds {MAX_OFFSETS}")));
        }
        Ok(self.neighborhood(self.origin()).collect())
    }
}

pub fn neighborhood_size(d: usize, range: i64) -> f64 {
    ((2 * range + 1) as f64).powi(d as i32) - 1.0
}

/// Odometer over `Λ_L(x) \ {x}`.
pub struct Neighborhood {
    center: Point,
    offset: [i16; MAX_DIM],
    range: i16,
    done: bool,
}

impl Neighborhood {
    fn new(center: Point, range: i64) -> Self {
        let r = range as i16;
        let mut offset = [0i16; MAX_DIM];
        for o in offset.iter_mut().take(center.dim()) {
            *o = -r;
        }
        Neighborhood { center, offset, range: r, done: false }
    }

    fn advance(&mut self) {
        let d = self.center.dim();
        for i in (0..d).rev() {
            if self.offset[i] < self.range {
                self.offset[i] += 1;
                return;
            }
            self.offset[i] = -self.range;
        }
        self.done = true;
    }
}

impl Iterator for Neighborhood {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        loop {
            if self.done {
                return None;
            }
            let off = Point::from_raw(self.offset, self.center.dim());
            self.advance();
            if !off.is_origin() {
                return Some(self.center + off);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        assert_eq!(m.kernel(&p(&[0, 0]), &p(&[1, 1])).unwrap(), 1.0 / 8.0);
        assert_eq!(m.kernel(&p(&[3, 4]), &p(&[3, 4])).unwrap(), 0.0);
        let m7 = SpreadOutModel::new(7, 1, 1.0).unwrap();
        let mut count = 0;
        for _ in m7.neighborhood(m7.origin()) {
            count += 1;
        }
        assert_eq!(count, 2186);
        let v = Point::axis(7, 0, 1);
        assert_eq!(m7.kernel(&m7.origin(), &v).unwrap(), 1.0 / 2186.0);
    }

    #[test]
    fn kernel_rejects_dimension_mismatch() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        assert!(matches!(m.kernel(&p(&[0, 0]), &p(&[1])), Err(Error::Usage(_))));
        assert!(matches!(m.kernel(&p(&[0]), &p(&[1])), Err(Error::Usage(_))));
    }

    #[test]
    fn edge_probability_examples() {
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        let q = m.edge_probability(&p(&[0, 0]), &p(&[1, 0])).unwrap();
        assert!((q - (1.0 - (-0.125f64).exp())).abs() < 1e-15);
        assert!((q - 0.117503).abs() < 1e-6);
        assert_eq!(m.edge_probability(&p(&[0, 0]), &p(&[2, 0])).unwrap(), 0.0);
        let m0 = m.with_beta(0.0).unwrap();
        assert_eq!(m0.edge_probability(&p(&[0, 0]), &p(&[1, 0])).unwrap(), 0.0);
    }

    #[test]
    fn neighborhood_examples() {
        let m = SpreadOutModel::new(1, 2, 1.0).unwrap();
        let v: Vec<i64> = m.neighborhood(m.origin()).map(|q| q.get(0)).collect();
        assert_eq!(v, vec![-2, -1, 1, 2]);
        let m = SpreadOutModel::new(2, 1, 1.0).unwrap();
        assert_eq!(m.neighborhood(m.origin()).count(), 8);
        let m = SpreadOutModel::new(7, 2, 1.0).unwrap();
        assert_eq!(m.neighborhood(m.origin()).count(), 78124);
        assert_eq!(m.offsets().unwrap().len(), 78124);
    }

    #[test]
    fn kernel_normalization_grid() {
        for d in 1..=7 {
            for l in 1..=8 {
                let m = SpreadOutModel::new(d, l, 1.0).unwrap();
                assert!((m.c_l() * m.neighborhood_size() - 1.0).abs() < 1e-12);
                if m.neighborhood_size() <= 2.0e6 {
                    let o = m.origin();
                    let s = crate::stats::kahan_sum(m.neighborhood(o).map(|v| m.kernel(&o, &v).unwrap()));
                    assert!((s - 1.0).abs() < 1e-12, "d={d} L={l} sum={s}");
                }
            }
        }
    }

    #[test]
    fn block_boundary_examples() {
        let b = Block::cube(3, 5).unwrap();
        assert_eq!(b.boundary_distance(&Point::origin(3)).unwrap(), 5);
        let h = Block::half_space(3, 0).unwrap();
        assert_eq!(h.boundary_distance(&p(&[3, -7, 100])).unwrap(), 3);
        let b = Block::new(&[Some(-2), None, None], &[None, None, None]).unwrap();
        assert_eq!(b.boundary_distance(&p(&[-2, 0, 0])).unwrap(), 0);
        assert!(Region::Block(b).is_boundary(&p(&[-2, 0, 0])));
        assert!(matches!(b.boundary_distance(&p(&[-3, 0, 0])), Err(Error::Usage(_))));
    }

    #[test]
    fn block_requires_origin() {
        assert!(Block::new(&[Some(1)], &[Some(3)]).is_err());
        assert!(Block::new(&[Some(-1)], &[Some(-1)]).is_err());
    }

    #[test]
    fn region_membership() {
        let bx = Region::cube(2, 3);
        assert!(bx.contains(&p(&[3, -3])));
        assert!(!bx.contains(&p(&[4, 0])));
        let h = Region::HalfSpace { shift: 2 };
        assert!(h.contains(&p(&[-2, 9])));
        assert!(!h.contains(&p(&[-3, 0])));
        assert!(h.is_boundary(&p(&[-2, 1])));
    }

    #[test]
    fn torus_wrap_and_index() {
        let t = Region::torus(4).unwrap();
        assert_eq!(t.wrap(p(&[2, -3])), p(&[-2, 1]));
        let mut seen = vec![false; t.dense_len(2).unwrap()];
        for a in -2..2 {
            for b in -2..2 {
                let i = t.dense_index(&p(&[a, b])).unwrap();
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert!(Region::torus(3).is_err());
    }

    #[test]
    fn exterior_counts_match_enumeration() {
        let m = SpreadOutModel::new(2, 2, 1.0).unwrap();
        let regions = [
            Region::cube(2, 3),
            Region::HalfSpace { shift: 1 },
            Region::Block(Block::new(&[Some(-1), None], &[Some(4), Some(0)]).unwrap()),
        ];
        for r in &regions {
            for a in -3..=3 {
                for b in -3..=3 {
                    let y = p(&[a, b]);
                    if !r.contains(&y) {
                        continue;
                    }
                    let brute = m.neighborhood(y).filter(|z| !r.contains(z)).count() as u64;
                    assert_eq!(r.exterior_count(&y, 2), brute, "{r:?} {y}");
                }
            }
        }
    }

    #[test]
    fn orbit_sizes() {
        assert_eq!(Point::origin(3).orbit_size(), 1);
        assert_eq!(p(&[1, 0, 0]).orbit_size(), 6);
        assert_eq!(p(&[1, 1, 0]).orbit_size(), 12);
        assert_eq!(p(&[2, 1, 0]).orbit_size(), 24);
        assert_eq!(p(&[1, 1, 1]).orbit_size(), 8);
        // Orbits partition Λ_2 in d=3.
        let mut total = 0u64;
        let mut seen = std::collections::HashSet::new();
        for a in -2..=2 {
            for b in -2..=2 {
                for c in -2..=2 {
                    let q = p(&[a, b, c]).canonical();
                    if seen.insert(q) {
                        total += q.orbit_size();
                    }
                }
            }
        }
        assert_eq!(total, 125);
    }

    #[test]
    fn keys_are_distinct() {
        let a = p(&[1, -1]);
        let b = p(&[-1, 1]);
        assert_ne!(a.key(), b.key());
        assert_eq!(a.key(), p(&[1, -1]).key());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn point(d: usize) -> impl Strategy<Value = Point> {
        prop::collection::vec(-20i64..=20, d).prop_map(|v| Point::new(&v).unwrap())
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_translation_invariant(
            (u, v) in (1usize..=5).prop_flat_map(|d| (point(d), point(d))),
            l in 1i64..=4,
        ) {
            let m = SpreadOutModel::new(u.dim(), l, 1.3).unwrap();
            let o = m.origin();
            let a = m.kernel(&u, &v).unwrap();
            prop_assert_eq!(a, m.kernel(&v, &u).unwrap());
            prop_assert_eq!(a, m.kernel(&o, &(v - u)).unwrap());
        }

        #[test]
        fn k_boundaries_partition_finite_blocks(
            lo in prop::collection::vec(-4i64..=0, 2),
            hi in prop::collection::vec(0i64..=4, 2),
        ) {
            let b = Block::new(
                &lo.iter().map(|&x| Some(x)).collect::<Vec<_>>(),
                &hi.iter().map(|&x| Some(x)).collect::<Vec<_>>(),
            ).unwrap();
            let region = Region::Block(b);
            let mut levels = std::collections::BTreeMap::new();
            for a in lo[0]..=hi[0] {
                for c in lo[1]..=hi[1] {
                    let x = Point::new(&[a, c]).unwrap();
                    let k = b.boundary_distance(&x).unwrap();
                    prop_assert!(k >= 0);
                    // ∂^0 B coincides with ∂B computed from unit ℓ∞-neighbours.
                    let outside = (-1..=1).any(|da| (-1..=1).any(|dc| {
                        !b.contains(&Point::new(&[a + da, c + dc]).unwrap())
                    }));
                    prop_assert_eq!(k == 0, outside);
                    prop_assert_eq!(region.is_boundary(&x), outside);
                    *levels.entry(k).or_insert(0usize) += 1;
                }
            }
            let total: usize = levels.values().sum();
            prop_assert_eq!(total, ((hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1)) as usize);
        }

        #[test]
        fn p_beta_strictly_increasing(beta in 0.0f64..3.0, delta in 1e-6f64..1.0, d in 1usize..=7, l in 1i64..=8) {
            let a = SpreadOutModel::new(d, l, beta).unwrap();
            let b = SpreadOutModel::new(d, l, beta + delta).unwrap();
            prop_assert!(a.p_beta() >= 0.0 && a.p_beta() < 1.0);
            prop_assert!(b.p_beta() > a.p_beta());
        }
    }
}
