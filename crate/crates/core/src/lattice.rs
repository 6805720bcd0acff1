//! Finite graph geometry: tori, boxes of `Z^d` with an absorbing halo,
//! cycles and paths.
//!
//! Sites are dense integer ids. On every graph the id order is the
//! coordinate-lexicographic order (axis 0 most significant); boxes list their
//! interior `{-L..L}^d` first and their halo afterwards. This order is the
//! canonical site order used for tie-breaking everywhere in the crate.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense identifier of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub u32);

impl SiteId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for SiteId {
    #[inline]
    fn from(i: usize) -> Self {
        SiteId(i as u32)
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The shape of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphKind {
    /// `Z_n^d` with periodic boundary.
    Torus { n: usize, d: usize },
    /// `B(L) = {-L..L}^d` plus a one-site absorbing halo.
    Box { l: usize, d: usize },
    /// `Z_n`, the one-dimensional torus.
    Cycle { n: usize },
    /// `{0..n-1}` with open (reflecting) ends.
    Path { n: usize },
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GraphKind::Torus { n, d } => write!(f, "torus:n={n},d={d}"),
            GraphKind::Box { l, d } => write!(f, "box:L={l},d={d}"),
            GraphKind::Cycle { n } => write!(f, "cycle:n={n}"),
            GraphKind::Path { n } => write!(f, "path:n={n}"),
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    /// Parses `torus:n=32,d=2`, `box:L=50,d=1`, `cycle:n=100` or `path:n=4`.
    fn from_str(spec: &str) -> Result<Self> {
        let fail = |reason: &str| Error::GraphSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (name, rest) = spec.trim().split_once(':').ok_or_else(|| fail("missing ':'"))?;
        let mut params: HashMap<String, usize> = HashMap::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| fail("expected key=value"))?;
            let v: usize = v.trim().parse().map_err(|_| fail("value is not an integer"))?;
            if params.insert(k.trim().to_string(), v).is_some() {
                return Err(fail("duplicate key"));
            }
        }
        let mut take = |key: &str| params.remove(key).ok_or_else(|| fail(&format!("missing {key}")));
        let kind = match name.trim() {
            "torus" => GraphKind::Torus { n: take("n")?, d: take("d")? },
            "box" => GraphKind::Box { l: take("L")?, d: take("d")? },
            "cycle" => GraphKind::Cycle { n: take("n")? },
            "path" => GraphKind::Path { n: take("n")? },
            _ => return Err(fail("unknown graph kind")),
        };
        if let Some(k) = params.keys().next() {
            return Err(fail(&format!("unexpected key {k}")));
        }
        Ok(kind)
    }
}

/// Which distance a geometric query uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Shortest-path distance in the graph.
    #[default]
    Graph,
    /// Infinity norm over lifts (torus) or over coordinates (box, path).
    Sup,
}

const MAX_SITES: usize = 1 << 26;

/// A finite graph with precomputed adjacency. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Graph {
    kind: GraphKind,
    dim: usize,
    coords: Vec<i32>,
    adj_start: Vec<u32>,
    adj: Vec<SiteId>,
    halo: Vec<bool>,
    interior: usize,
    halo_lookup: HashMap<Vec<i32>, SiteId>,
}

impl Graph {
    pub fn new(kind: GraphKind) -> Result<Self> {
        match kind {
            GraphKind::Torus { n, d } => Self::build_torus(kind, n, d),
            GraphKind::Cycle { n } => Self::build_torus(kind, n, 1),
            GraphKind::Box { l, d } => Self::build_box(l, d),
            GraphKind::Path { n } => Self::build_path(n),
        }
    }

    pub fn torus(n: usize, d: usize) -> Result<Self> {
        Self::new(GraphKind::Torus { n, d })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        Self::new(GraphKind::Cycle { n })
    }

    pub fn boxed(l: usize, d: usize) -> Result<Self> {
        Self::new(GraphKind::Box { l, d })
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(GraphKind::Path { n })
    }

    fn check_size(count: Option<usize>) -> Result<usize> {
        match count {
            Some(c) if c <= MAX_SITES => Ok(c),
            _ => Err(Error::InvalidGraph(format!("more than {MAX_SITES} sites"))),
        }
    }

    fn build_torus(kind: GraphKind, n: usize, d: usize) -> Result<Self> {
        if n < 3 || d == 0 {
            return Err(Error::InvalidGraph(format!("torus needs n >= 3 and d >= 1 ({kind})")));
        }
        let count = Self::check_size(n.checked_pow(d as u32))?;
        let mut coords = Vec::with_capacity(count * d);
        for i in 0..count {
            let mut rem = i;
            let mut c = vec![0i32; d];
            for a in (0..d).rev() {
                c[a] = (rem % n) as i32;
                rem /= n;
            }
            coords.extend_from_slice(&c);
        }
        let mut adj_start = Vec::with_capacity(count + 1);
        let mut adj = Vec::with_capacity(count * 2 * d);
        let stride: Vec<usize> = (0..d).map(|a| n.pow((d - 1 - a) as u32)).collect();
        for i in 0..count {
            adj_start.push(adj.len() as u32);
            for a in 0..d {
                let c = coords[i * d + a] as usize;
                let down = (c + n - 1) % n;
                let up = (c + 1) % n;
                adj.push(SiteId::from(i - c * stride[a] + down * stride[a]));
                adj.push(SiteId::from(i - c * stride[a] + up * stride[a]));
            }
        }
        adj_start.push(adj.len() as u32);
        Ok(Graph {
            kind,
            dim: d,
            coords,
            adj_start,
            adj,
            halo: vec![false; count],
            interior: count,
            halo_lookup: HashMap::new(),
        })
    }

    fn build_box(l: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGraph("box needs d >= 1".into()));
        }
        let side = 2 * l + 1;
        let interior = Self::check_size(side.checked_pow(d as u32))?;
        let li = l as i32;
        let mut coords = Vec::new();
        for i in 0..interior {
            let mut rem = i;
            let mut c = vec![0i32; d];
            for a in (0..d).rev() {
                c[a] = (rem % side) as i32 - li;
                rem /= side;
            }
            coords.extend_from_slice(&c);
        }
        // Halo: exactly one coordinate at +-(L+1), lexicographic order.
        let outer = side + 2;
        let outer_count = Self::check_size(outer.checked_pow(d as u32))?;
        let mut halo_lookup = HashMap::new();
        let mut halo_count = 0;
        for i in 0..outer_count {
            let mut rem = i;
            let mut c = vec![0i32; d];
            for a in (0..d).rev() {
                c[a] = (rem % outer) as i32 - li - 1;
                rem /= outer;
            }
            let outside = c.iter().filter(|v| v.abs() == li + 1).count();
            if outside == 1 {
                halo_lookup.insert(c.clone(), SiteId::from(interior + halo_count));
                coords.extend_from_slice(&c);
                halo_count += 1;
            }
        }
        let count = interior + halo_count;
        let mut g = Graph {
            kind: GraphKind::Box { l, d },
            dim: d,
            coords,
            adj_start: Vec::with_capacity(count + 1),
            adj: Vec::new(),
            halo: (0..count).map(|i| i >= interior).collect(),
            interior,
            halo_lookup,
        };
        let mut adj_start = Vec::with_capacity(count + 1);
        let mut adj = Vec::new();
        let mut c = vec![0i32; d];
        for i in 0..count {
            adj_start.push(adj.len() as u32);
            for a in 0..d {
                for delta in [-1i32, 1] {
                    c.copy_from_slice(g.coords(SiteId::from(i)));
                    c[a] += delta;
                    if i >= interior && c.iter().any(|v| v.abs() > li) {
                        // Halo sites only connect back toward the interior.
                        continue;
                    }
                    if let Some(y) = g.site_at(&c) {
                        adj.push(y);
                    }
                }
            }
        }
        adj_start.push(adj.len() as u32);
        g.adj_start = adj_start;
        g.adj = adj;
        Ok(g)
    }

    fn build_path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph("path needs n >= 2".into()));
        }
        Self::check_size(Some(n))?;
        let coords = (0..n as i32).collect();
        let mut adj_start = Vec::with_capacity(n + 1);
        let mut adj = Vec::with_capacity(2 * n);
        for i in 0..n {
            adj_start.push(adj.len() as u32);
            if i > 0 {
                adj.push(SiteId::from(i - 1));
            }
            if i + 1 < n {
                adj.push(SiteId::from(i + 1));
            }
        }
        adj_start.push(adj.len() as u32);
        Ok(Graph {
            kind: GraphKind::Path { n },
            dim: 1,
            coords,
            adj_start,
            adj,
            halo: vec![false; n],
            interior: n,
            halo_lookup: HashMap::new(),
        })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn site_count(&self) -> usize {
        self.halo.len()
    }

    /// Number of non-halo sites; they carry ids `0..interior_count()`.
    pub fn interior_count(&self) -> usize {
        self.interior
    }

    pub fn sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        (0..self.site_count()).map(SiteId::from)
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        (0..self.interior).map(SiteId::from)
    }

    /// All non-halo sites.
    pub fn interior(&self) -> SiteSet {
        SiteSet::from_sites(self.site_count(), self.interior_sites())
    }

    #[inline]
    pub fn is_halo(&self, x: SiteId) -> bool {
        self.halo[x.index()]
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, GraphKind::Torus { .. } | GraphKind::Cycle { .. })
    }

    /// Side length `n` of a torus or cycle.
    pub fn torus_side(&self) -> Option<usize> {
        match self.kind {
            GraphKind::Torus { n, .. } | GraphKind::Cycle { n } => Some(n),
            _ => None,
        }
    }

    #[inline]
    pub fn degree(&self, x: SiteId) -> usize {
        let i = x.index();
        (self.adj_start[i + 1] - self.adj_start[i]) as usize
    }

    /// Maximal degree over non-halo sites.
    pub fn max_degree(&self) -> usize {
        self.interior_sites().map(|x| self.degree(x)).max().unwrap_or(0)
    }

    /// Raw adjacency, including the inward edge of halo sites.
    #[inline]
    pub fn adjacent(&self, x: SiteId) -> &[SiteId] {
        let i = x.index();
        &self.adj[self.adj_start[i] as usize..self.adj_start[i + 1] as usize]
    }

    /// Neighbours of a non-halo site in canonical order: for each axis, the
    /// `-1` offset then the `+1` offset.
    pub fn neighbors(&self, x: SiteId) -> Result<&[SiteId]> {
        self.check(x)?;
        if self.is_halo(x) {
            return Err(Error::AbsorbingSite(x));
        }
        Ok(self.adjacent(x))
    }

    pub fn are_adjacent(&self, x: SiteId, y: SiteId) -> bool {
        self.adjacent(x).contains(&y)
    }

    pub fn check(&self, x: SiteId) -> Result<()> {
        if x.index() < self.site_count() {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange(x))
        }
    }

    #[inline]
    pub fn coords(&self, x: SiteId) -> &[i32] {
        &self.coords[x.index() * self.dim..(x.index() + 1) * self.dim]
    }

    /// Inverse of [`Graph::coords`]. Torus coordinates are reduced modulo `n`.
    pub fn site_at(&self, c: &[i32]) -> Option<SiteId> {
        if c.len() != self.dim {
            return None;
        }
        match self.kind {
            GraphKind::Torus { n, .. } | GraphKind::Cycle { n } => {
                let n = n as i64;
                let mut i = 0i64;
                for &v in c {
                    i = i * n + (v as i64).rem_euclid(n);
                }
                Some(SiteId::from(i as usize))
            }
            GraphKind::Path { n } => {
                (c[0] >= 0 && (c[0] as usize) < n).then(|| SiteId::from(c[0] as usize))
            }
            GraphKind::Box { l, .. } => {
                let li = l as i32;
                if c.iter().all(|v| v.abs() <= li) {
                    let side = 2 * l + 1;
                    let mut i = 0usize;
                    for &v in c {
                        i = i * side + (v + li) as usize;
                    }
                    Some(SiteId::from(i))
                } else {
                    self.halo_lookup.get(c).copied()
                }
            }
        }
    }

    /// The torus distance: minimum over lifts of the infinity norm.
    pub fn torus_distance(&self, x: SiteId, y: SiteId) -> Result<usize> {
        let n = self.torus_side().ok_or_else(|| Error::NotATorus(self.kind.to_string()))?;
        self.check(x)?;
        self.check(y)?;
        Ok(self
            .coords(x)
            .iter()
            .zip(self.coords(y))
            .map(|(a, b)| wrap(a - b, n))
            .max()
            .unwrap_or(0))
    }

    pub fn distance(&self, x: SiteId, y: SiteId, metric: Metric) -> Result<usize> {
        self.check(x)?;
        self.check(y)?;
        let (cx, cy) = (self.coords(x), self.coords(y));
        let per_axis = cx.iter().zip(cy).map(|(a, b)| match self.torus_side() {
            Some(n) => wrap(a - b, n),
            None => (a - b).unsigned_abs() as usize,
        });
        Ok(match metric {
            Metric::Graph => per_axis.sum(),
            Metric::Sup => per_axis.max().unwrap_or(0),
        })
    }

    /// Sites one step away under the metric: graph neighbours for
    /// [`Metric::Graph`], king moves for [`Metric::Sup`].
    fn metric_steps(&self, x: SiteId, metric: Metric, out: &mut Vec<SiteId>) {
        out.clear();
        match metric {
            Metric::Graph => {
                if self.is_halo(x) {
                    return;
                }
                out.extend_from_slice(self.adjacent(x));
            }
            Metric::Sup => {
                let d = self.dim;
                let base = self.coords(x).to_vec();
                let mut c = vec![0i32; d];
                for code in 0..3usize.pow(d as u32) {
                    let mut rem = code;
                    let mut zero = true;
                    for a in 0..d {
                        let off = (rem % 3) as i32 - 1;
                        rem /= 3;
                        zero &= off == 0;
                        c[a] = base[a] + off;
                    }
                    if zero {
                        continue;
                    }
                    if let Some(y) = self.site_at(&c) {
                        if y != x && !out.contains(&y) {
                            out.push(y);
                        }
                    }
                }
            }
        }
    }

    /// `B(x, r)` by breadth-first search under `metric`.
    pub fn ball(&self, x: SiteId, r: usize, metric: Metric) -> Result<SiteSet> {
        self.check(x)?;
        let mut ball = SiteSet::new(self.site_count());
        let mut queue = VecDeque::from([(x, 0usize)]);
        ball.insert(x);
        let mut steps = Vec::new();
        while let Some((y, dist)) = queue.pop_front() {
            if dist == r {
                continue;
            }
            self.metric_steps(y, metric, &mut steps);
            for &z in &steps {
                if ball.insert(z) {
                    queue.push_back((z, dist + 1));
                }
            }
        }
        Ok(ball)
    }

    /// Maximal pairwise distance within a non-empty set.
    pub fn diameter(&self, set: &SiteSet, metric: Metric) -> Result<usize> {
        if set.is_empty() {
            return Err(Error::EmptySet("diameter"));
        }
        let sites: Vec<SiteId> = set.iter().collect();
        let mut best = 0;
        for (i, &x) in sites.iter().enumerate() {
            for &y in &sites[i + 1..] {
                best = best.max(self.distance(x, y, metric)?);
            }
        }
        Ok(best)
    }

    /// Maximal `r`-connected components of `set`, ordered by their minimal site.
    pub fn r_components(&self, set: &SiteSet, r: usize, metric: Metric) -> Result<Vec<SiteSet>> {
        if r == 0 {
            return Err(Error::InvalidParameter("r-connectivity needs r >= 1".into()));
        }
        let sites: Vec<SiteId> = set.iter().collect();
        let mut parent: Vec<usize> = (0..sites.len()).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                if self.distance(sites[i], sites[j], metric)? <= r {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut by_root: Vec<Option<usize>> = vec![None; sites.len()];
        let mut parts: Vec<SiteSet> = Vec::new();
        for i in 0..sites.len() {
            let rt = root(&mut parent, i);
            let slot = *by_root[rt].get_or_insert_with(|| {
                parts.push(SiteSet::new(self.site_count()));
                parts.len() - 1
            });
            parts[slot].insert(sites[i]);
        }
        Ok(parts)
    }
}

#[inline]
fn wrap(delta: i32, n: usize) -> usize {
    let a = (delta.unsigned_abs() as usize) % n;
    a.min(n - a)
}

/// A subset of the sites of a graph, stored as a bitmap.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SiteSet {
    words: Vec<u64>,
    universe: usize,
    len: usize,
}

impl SiteSet {
    pub fn new(universe: usize) -> Self {
        SiteSet { words: vec![0; universe.div_ceil(64)], universe, len: 0 }
    }

    pub fn full(universe: usize) -> Self {
        Self::from_sites(universe, (0..universe).map(SiteId::from))
    }

    pub fn from_sites<I: IntoIterator<Item = SiteId>>(universe: usize, sites: I) -> Self {
        let mut s = Self::new(universe);
        for x in sites {
            s.insert(x);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, x: SiteId) -> bool {
        let i = x.index();
        i < self.universe && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Returns whether the site was newly inserted.
    #[inline]
    pub fn insert(&mut self, x: SiteId) -> bool {
        let i = x.index();
        assert!(i < self.universe, "site {i} outside universe {}", self.universe);
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        self.len += fresh as usize;
        fresh
    }

    #[inline]
    pub fn remove(&mut self, x: SiteId) -> bool {
        let i = x.index();
        if i >= self.universe {
            return false;
        }
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let present = self.words[w] & b != 0;
        self.words[w] &= !b;
        self.len -= present as usize;
        present
    }

    /// Sites in increasing id order.
    pub fn iter(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(SiteId::from(w * 64 + t))
            })
        })
    }

    pub fn min(&self) -> Option<SiteId> {
        self.iter().next()
    }

    fn zip_with(&self, other: &SiteSet, op: impl Fn(u64, u64) -> u64) -> SiteSet {
        assert_eq!(self.universe, other.universe, "site sets over different graphs");
        let words: Vec<u64> = self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect();
        let len = words.iter().map(|w| w.count_ones() as usize).sum();
        SiteSet { words, universe: self.universe, len }
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.words.iter().zip(&other.words).all(|(&a, &b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &SiteSet) -> bool {
        self.words.iter().zip(&other.words).all(|(&a, &b)| a & b == 0)
    }

    pub fn to_vec(&self) -> Vec<SiteId> {
        self.iter().collect()
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|x| x.0)).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct SiteSetRepr {
    universe: usize,
    sites: Vec<u32>,
}

impl Serialize for SiteSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SiteSetRepr { universe: self.universe, sites: self.iter().map(|x| x.0).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SiteSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SiteSetRepr::deserialize(d)?;
        if let Some(bad) = repr.sites.iter().find(|&&x| x as usize >= repr.universe) {
            return Err(serde::de::Error::custom(format!("site {bad} outside universe")));
        }
        Ok(SiteSet::from_sites(repr.universe, repr.sites.into_iter().map(SiteId)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<SiteId> {
        v.iter().map(|&i| SiteId::from(i)).collect()
    }

    #[test]
    fn cycle_neighbors() {
        let g = Graph::cycle(5).unwrap();
        assert_eq!(g.neighbors(SiteId(0)).unwrap(), ids(&[4, 1]).as_slice());
    }

    #[test]
    fn torus_neighbors_wrap() {
        let g = Graph::torus(3, 2).unwrap();
        let x = g.site_at(&[0, 0]).unwrap();
        let got: Vec<Vec<i32>> = g.neighbors(x).unwrap().iter().map(|&y| g.coords(y).to_vec()).collect();
        assert_eq!(got, vec![vec![2, 0], vec![1, 0], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn box_boundary_reaches_halo() {
        let g = Graph::boxed(1, 1).unwrap();
        let x = g.site_at(&[1]).unwrap();
        let nb = g.neighbors(x).unwrap();
        let got: Vec<i32> = nb.iter().map(|&y| g.coords(y)[0]).collect();
        assert_eq!(got, vec![0, 2]);
        assert!(g.is_halo(nb[1]));
        assert_eq!(g.neighbors(nb[1]), Err(Error::AbsorbingSite(nb[1])));
    }

    #[test]
    fn box_halo_layout() {
        let g = Graph::boxed(2, 2).unwrap();
        assert_eq!(g.interior_count(), 25);
        assert_eq!(g.site_count(), 25 + 4 * 5);
        for x in g.interior_sites() {
            assert_eq!(g.degree(x), 4);
        }
        for x in g.sites().filter(|&x| g.is_halo(x)) {
            assert_eq!(g.adjacent(x).len(), 1);
            assert!(!g.is_halo(g.adjacent(x)[0]));
        }
    }

    #[test]
    fn coordinate_round_trip() {
        for kind in [
            GraphKind::Torus { n: 4, d: 3 },
            GraphKind::Box { l: 2, d: 2 },
            GraphKind::Cycle { n: 7 },
            GraphKind::Path { n: 5 },
        ] {
            let g = Graph::new(kind).unwrap();
            for x in g.sites() {
                assert_eq!(g.site_at(g.coords(x)), Some(x), "{kind}");
            }
        }
    }

    #[test]
    fn torus_distance_examples() {
        let g = Graph::torus(5, 2).unwrap();
        let at = |a, b| g.site_at(&[a, b]).unwrap();
        assert_eq!(g.torus_distance(at(0, 0), at(4, 4)).unwrap(), 1);
        assert_eq!(g.torus_distance(at(0, 0), at(2, 1)).unwrap(), 2);
        let c = Graph::torus(7, 1).unwrap();
        assert_eq!(c.torus_distance(SiteId(0), SiteId(3)).unwrap(), 3);
        let b = Graph::boxed(2, 1).unwrap();
        assert!(matches!(b.torus_distance(SiteId(0), SiteId(1)), Err(Error::NotATorus(_))));
    }

    #[test]
    fn ball_examples() {
        let g = Graph::torus(5, 2).unwrap();
        assert_eq!(g.ball(SiteId(0), 1, Metric::Sup).unwrap().len(), 9);
        assert_eq!(g.ball(SiteId(7), 0, Metric::Sup).unwrap().to_vec(), vec![SiteId(7)]);
        let b = Graph::boxed(3, 1).unwrap();
        let o = b.site_at(&[0]).unwrap();
        let ball = b.ball(o, 2, Metric::Graph).unwrap();
        let mut cs: Vec<i32> = ball.iter().map(|x| b.coords(x)[0]).collect();
        cs.sort();
        assert_eq!(cs, vec![-2, -1, 0, 1, 2]);
    }

    #[test]
    fn r_components_examples() {
        let g = Graph::torus(9, 2).unwrap();
        let at = |a, b| g.site_at(&[a, b]).unwrap();
        let s = SiteSet::from_sites(81, [at(0, 0), at(0, 2)]);
        assert_eq!(g.r_components(&s, 2, Metric::Sup).unwrap().len(), 1);
        let s = SiteSet::from_sites(81, [at(0, 0), at(0, 4)]);
        assert_eq!(g.r_components(&s, 2, Metric::Sup).unwrap().len(), 2);
        assert!(g.r_components(&SiteSet::new(81), 2, Metric::Sup).unwrap().is_empty());
        assert!(g.r_components(&s, 0, Metric::Sup).is_err());
    }

    #[test]
    fn diameter_examples() {
        let g = Graph::torus(5, 2).unwrap();
        let at = |a, b| g.site_at(&[a, b]).unwrap();
        assert_eq!(g.diameter(&SiteSet::from_sites(25, [at(3, 3)]), Metric::Sup).unwrap(), 0);
        assert_eq!(g.diameter(&SiteSet::from_sites(25, [at(0, 0), at(1, 1)]), Metric::Sup).unwrap(), 1);
        assert_eq!(g.diameter(&SiteSet::full(25), Metric::Sup).unwrap(), 2);
        assert_eq!(g.diameter(&SiteSet::new(25), Metric::Sup), Err(Error::EmptySet("diameter")));
    }

    #[test]
    fn graph_spec_round_trip() {
        for s in ["torus:n=32,d=2", "box:L=50,d=1", "cycle:n=100", "path:n=4"] {
            let k: GraphKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("torus:n=3".parse::<GraphKind>().is_err());
        assert!("blob:n=3".parse::<GraphKind>().is_err());
        assert!("cycle:n=3,x=1".parse::<GraphKind>().is_err());
    }

    #[test]
    fn site_set_ops() {
        let a = SiteSet::from_sites(100, ids(&[1, 64, 99]));
        let b = SiteSet::from_sites(100, ids(&[64, 2]));
        assert_eq!(a.union(&b).len(), 4);
        assert_eq!(a.intersection(&b).to_vec(), ids(&[64]));
        assert_eq!(a.difference(&b).to_vec(), ids(&[1, 99]));
        assert!(a.intersection(&b).is_subset(&a));
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<SiteSet>(&json).unwrap(), a);
    }
}
