//! Ordered Bratteli diagrams: validation, composition, telescoping and
//! bounded order-equivalence search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// One edge of an ordered diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub source: usize,
    pub range: usize,
    /// Position of the edge within its fiber `r^{-1}(r(e))`.
    pub order: usize,
}

/// Edges between two finite vertex sets, ordered within each range fiber.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedDiagram {
    sources: usize,
    ranges: usize,
    edges: Vec<Edge>,
    fibers: Vec<Vec<usize>>,
}

impl OrderedDiagram {
    /// Builds the diagram; invariants are reported by [`OrderedDiagram::validate`].
    pub fn new(sources: usize, ranges: usize, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.source >= sources || e.range >= ranges {
                return Err(Error::Invalid(format!(
                    "edge {}->{} outside {}x{} vertices",
                    e.source, e.range, sources, ranges
                )));
            }
        }
        let mut fibers = vec![Vec::new(); ranges];
        for (i, e) in edges.iter().enumerate() {
            fibers[e.range].push(i);
        }
        for f in &mut fibers {
            f.sort_by_key(|&i| (edges[i].order, i));
        }
        Ok(OrderedDiagram {
            sources,
            ranges,
            edges,
            fibers,
        })
    }

    /// Diagram whose fiber into `w` lists the sources `fibers[w]` in order.
    pub fn from_fibers(sources: usize, fibers: &[Vec<usize>]) -> Result<Self> {
        let edges = fibers
            .iter()
            .enumerate()
            .flat_map(|(w, f)| {
                f.iter().enumerate().map(move |(k, &s)| Edge {
                    source: s,
                    range: w,
                    order: k,
                })
            })
            .collect();
        OrderedDiagram::new(sources, fibers.len(), edges)
    }

    pub fn source_count(&self) -> usize {
        self.sources
    }

    pub fn range_count(&self) -> usize {
        self.ranges
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> Edge {
        self.edges[i]
    }

    /// Edge indices into `w`, in fiber order.
    pub fn fiber(&self, w: usize) -> &[usize] {
        &self.fibers[w]
    }

    /// Sources of the fiber into `w`, in fiber order.
    pub fn fiber_sources(&self, w: usize) -> Vec<usize> {
        self.fibers[w].iter().map(|&i| self.edges[i].source).collect()
    }

    /// Position of edge `i` inside its fiber.
    pub fn rank(&self, i: usize) -> usize {
        let w = self.edges[i].range;
        self.fibers[w].iter().position(|&j| j == i).expect("edge lies in its fiber")
    }

    pub fn max_edge(&self, w: usize) -> Option<usize> {
        self.fibers[w].last().copied()
    }

    pub fn min_edge(&self, w: usize) -> Option<usize> {
        self.fibers[w].first().copied()
    }

    /// Edge right after `i` in its fiber.
    pub fn next_in_fiber(&self, i: usize) -> Option<usize> {
        let f = &self.fibers[self.edges[i].range];
        let k = f.iter().position(|&j| j == i)?;
        f.get(k + 1).copied()
    }

    pub fn prev_in_fiber(&self, i: usize) -> Option<usize> {
        let f = &self.fibers[self.edges[i].range];
        let k = f.iter().position(|&j| j == i)?;
        k.checked_sub(1).map(|k| f[k])
    }

    /// Invariant violations as `(invariant, detail)` pairs.
    pub fn violations(&self) -> Vec<(ViolationKind, String)> {
        let mut out = Vec::new();
        let mut has_out = vec![false; self.sources];
        for e in &self.edges {
            has_out[e.source] = true;
        }
        for (v, ok) in has_out.iter().enumerate() {
            if !ok {
                out.push((ViolationKind::SourceSurjectivity, format!("source vertex {v} emits no edge")));
            }
        }
        for (w, f) in self.fibers.iter().enumerate() {
            if f.is_empty() {
                out.push((ViolationKind::RangeSurjectivity, format!("range vertex {w} receives no edge")));
                continue;
            }
            let orders: Vec<usize> = f.iter().map(|&i| self.edges[i].order).collect();
            if orders != (0..f.len()).collect::<Vec<_>>() {
                out.push((
                    ViolationKind::FiberOrder,
                    format!("fiber into {w} has order indices {orders:?}"),
                ));
            }
        }
        out
    }
}

/// `F ∘ E`: paths `(e, f)` ordered by `f` first, then `e`.
pub fn compose(e: &OrderedDiagram, f: &OrderedDiagram) -> Result<OrderedDiagram> {
    if e.ranges != f.sources {
        return Err(Error::LevelMismatch(format!(
            "first diagram has {} range vertices, second has {} source vertices",
            e.ranges, f.sources
        )));
    }
    let mut edges = Vec::new();
    for w in 0..f.ranges {
        let mut k = 0;
        for &fi in &f.fibers[w] {
            for &ei in &e.fibers[f.edges[fi].source] {
                edges.push(Edge {
                    source: e.edges[ei].source,
                    range: w,
                    order: k,
                });
                k += 1;
            }
        }
    }
    OrderedDiagram::new(e.sources, f.ranges, edges)
}

/// Order equivalence with both vertex sets held fixed: fibers agree as
/// source sequences.
pub fn order_equivalent_fixed(a: &OrderedDiagram, b: &OrderedDiagram) -> bool {
    a.sources == b.sources
        && a.ranges == b.ranges
        && (0..a.ranges).all(|w| a.fiber_sources(w) == b.fiber_sources(w))
}

/// Witness of an order isomorphism between two ordered diagrams.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IsoWitness {
    pub source_map: Vec<usize>,
    pub range_map: Vec<usize>,
    pub edge_map: Vec<usize>,
}

/// All range bijections compatible with a fixed source bijection, in
/// lexicographic order. Ranges with equal fiber signatures are interchangeable.
fn range_bijections(a: &OrderedDiagram, b: &OrderedDiagram, sigma: &[usize], limit: usize) -> Vec<Vec<usize>> {
    if a.ranges != b.ranges {
        return Vec::new();
    }
    let sig_a: Vec<Vec<usize>> = (0..a.ranges)
        .map(|w| a.fiber_sources(w).into_iter().map(|s| sigma[s]).collect())
        .collect();
    let mut groups_b: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for w in 0..b.ranges {
        groups_b.entry(b.fiber_sources(w)).or_default().push(w);
    }
    let mut groups_a: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (w, s) in sig_a.iter().enumerate() {
        groups_a.entry(s.clone()).or_default().push(w);
    }
    if groups_a.len() != groups_b.len() {
        return Vec::new();
    }
    let mut pairs = Vec::new();
    for (k, ws) in &groups_a {
        match groups_b.get(k) {
            Some(vs) if vs.len() == ws.len() => pairs.push((ws.clone(), vs.clone())),
            _ => return Vec::new(),
        }
    }
    let mut out = Vec::new();
    let mut current = vec![usize::MAX; a.ranges];
    fill_groups(&pairs, 0, &mut current, &mut out, limit);
    out
}

fn fill_groups(
    pairs: &[(Vec<usize>, Vec<usize>)],
    g: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    limit: usize,
) {
    if out.len() >= limit {
        return;
    }
    if g == pairs.len() {
        out.push(current.clone());
        return;
    }
    let (ws, vs) = &pairs[g];
    for perm in permutations(vs.len()) {
        for (i, &w) in ws.iter().enumerate() {
            current[w] = vs[perm[i]];
        }
        fill_groups(pairs, g + 1, current, out, limit);
        if out.len() >= limit {
            return;
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(n, &mut cur, &mut used, &mut out);
    out
}

fn out_profile(d: &OrderedDiagram, v: usize) -> Vec<(usize, usize)> {
    let mut p: Vec<(usize, usize)> = d
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.source == v)
        .map(|(i, e)| (d.fibers[e.range].len(), d.rank(i)))
        .collect();
    p.sort_unstable();
    p
}

fn edge_map_for(a: &OrderedDiagram, b: &OrderedDiagram, pi: &[usize]) -> Vec<usize> {
    let mut m = vec![0; a.edges.len()];
    for w in 0..a.ranges {
        for (k, &i) in a.fibers[w].iter().enumerate() {
            m[i] = b.fibers[pi[w]][k];
        }
    }
    m
}

/// Searches vertex bijections (with degree pruning) for an order isomorphism.
pub fn order_isomorphic(a: &OrderedDiagram, b: &OrderedDiagram) -> Option<IsoWitness> {
    if a.sources != b.sources || a.ranges != b.ranges || a.edges.len() != b.edges.len() {
        return None;
    }
    let pa: Vec<_> = (0..a.sources).map(|v| out_profile(a, v)).collect();
    let pb: Vec<_> = (0..b.sources).map(|v| out_profile(b, v)).collect();
    let mut sigma = vec![usize::MAX; a.sources];
    let mut used = vec![false; b.sources];
    fn rec(
        a: &OrderedDiagram,
        b: &OrderedDiagram,
        pa: &[Vec<(usize, usize)>],
        pb: &[Vec<(usize, usize)>],
        v: usize,
        sigma: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> Option<IsoWitness> {
        if v == a.sources {
            let pi = range_bijections(a, b, sigma, 1).pop()?;
            return Some(IsoWitness {
                source_map: sigma.clone(),
                edge_map: edge_map_for(a, b, &pi),
                range_map: pi,
            });
        }
        for u in 0..b.sources {
            if !used[u] && pa[v] == pb[u] {
                used[u] = true;
                sigma[v] = u;
                if let Some(w) = rec(a, b, pa, pb, v + 1, sigma, used) {
                    return Some(w);
                }
                used[u] = false;
            }
        }
        None
    }
    rec(a, b, &pa, &pb, 0, &mut sigma, &mut used)
}

/// Kind of a structural violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    RootNotSingleton,
    LevelMismatch,
    SourceSurjectivity,
    RangeSurjectivity,
    FiberOrder,
    BadExtension,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub level: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

/// How the diagram continues past its last materialized level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Extension {
    None,
    /// Level `n > N` repeats level `n - period`.
    Stationary { period: usize },
}

/// An ordered Bratteli diagram truncated to `N` levels, with optional
/// stationary continuation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedBratteliDiagram {
    names: Vec<Vec<String>>,
    levels: Vec<OrderedDiagram>,
    extension: Extension,
}

impl OrderedBratteliDiagram {
    /// `names[n]` names the vertices of `V_n`; `levels[n - 1]` is `E_n`.
    pub fn new(names: Vec<Vec<String>>, levels: Vec<OrderedDiagram>, extension: Extension) -> Result<Self> {
        if names.len() != levels.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} vertex levels for {} edge levels",
                names.len(),
                levels.len()
            )));
        }
        for (n, d) in levels.iter().enumerate() {
            if d.sources != names[n].len() || d.ranges != names[n + 1].len() {
                return Err(Error::LevelMismatch(format!(
                    "edge level {} joins {}x{} vertices, levels have {} and {}",
                    n + 1,
                    d.sources,
                    d.ranges,
                    names[n].len(),
                    names[n + 1].len()
                )));
            }
        }
        Ok(OrderedBratteliDiagram {
            names,
            levels,
            extension,
        })
    }

    /// Same as [`OrderedBratteliDiagram::new`] with vertices named `v0, v1, …`.
    pub fn from_levels(levels: Vec<OrderedDiagram>, extension: Extension) -> Result<Self> {
        let mut names = Vec::with_capacity(levels.len() + 1);
        names.push(default_names(levels.first().map_or(1, |d| d.sources)));
        for d in &levels {
            names.push(default_names(d.ranges));
        }
        OrderedBratteliDiagram::new(names, levels, extension)
    }

    /// Number of materialized edge levels.
    pub fn materialized(&self) -> usize {
        self.levels.len()
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.extension, Extension::Stationary { .. })
    }

    /// Number of edge levels available, `usize::MAX` when stationary.
    pub fn available(&self) -> usize {
        if self.is_infinite() {
            usize::MAX
        } else {
            self.levels.len()
        }
    }

    fn fold(&self, n: usize) -> Option<usize> {
        let big = self.levels.len();
        if n <= big {
            return Some(n);
        }
        match self.extension {
            Extension::None => None,
            Extension::Stationary { period } if period >= 1 && period <= big => {
                Some(big - period + 1 + (n - big - 1) % period)
            }
            Extension::Stationary { .. } => None,
        }
    }

    /// `E_n` for `n >= 1`.
    pub fn edge_level(&self, n: usize) -> Option<&OrderedDiagram> {
        if n == 0 {
            return None;
        }
        self.fold(n).map(|m| &self.levels[m - 1])
    }

    pub fn vertex_count(&self, n: usize) -> Option<usize> {
        if n == 0 {
            return Some(self.names[0].len());
        }
        self.edge_level(n).map(|d| d.ranges)
    }

    pub fn vertex_name(&self, n: usize, v: usize) -> String {
        if n == 0 {
            return self.names[0][v].clone();
        }
        let m = self.fold(n).expect("level is available");
        self.names[m][v].clone()
    }

    pub fn vertex_by_name(&self, n: usize, name: &str) -> Option<usize> {
        let m = if n == 0 { 0 } else { self.fold(n)? };
        self.names[m].iter().position(|s| s == name)
    }

    pub fn names(&self) -> &[Vec<String>] {
        &self.names
    }

    pub fn levels(&self) -> &[OrderedDiagram] {
        &self.levels
    }

    /// All invariant violations; empty iff the diagram is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.names[0].len() != 1 {
            out.push(Violation {
                level: 0,
                kind: ViolationKind::RootNotSingleton,
                detail: format!("V_0 has {} vertices", self.names[0].len()),
            });
        }
        for (n, d) in self.levels.iter().enumerate() {
            for (kind, detail) in d.violations() {
                out.push(Violation {
                    level: n + 1,
                    kind,
                    detail,
                });
            }
        }
        if let Extension::Stationary { period } = self.extension {
            let big = self.levels.len();
            if period == 0 || period > big {
                out.push(Violation {
                    level: big,
                    kind: ViolationKind::BadExtension,
                    detail: format!("period {period} with {big} materialized levels"),
                });
            } else if self.names[big - period].len() != self.names[big].len() {
                out.push(Violation {
                    level: big,
                    kind: ViolationKind::BadExtension,
                    detail: format!(
                        "repeated block starts at {} vertices and ends at {}",
                        self.names[big - period].len(),
                        self.names[big].len()
                    ),
                });
            }
        }
        out
    }

    /// Composite of `E_{from+1}, …, E_to` (paths from `V_from` to `V_to`).
    pub fn composite(&self, from: usize, to: usize) -> Result<OrderedDiagram> {
        if to <= from {
            return Err(Error::BadCuts(format!("empty range {from}..{to}")));
        }
        let first = self
            .edge_level(from + 1)
            .ok_or_else(|| Error::BadCuts(format!("level {} unavailable", from + 1)))?;
        let mut acc = first.clone();
        for n in from + 2..=to {
            let next = self
                .edge_level(n)
                .ok_or_else(|| Error::BadCuts(format!("level {n} unavailable")))?;
            acc = compose(&acc, next)?;
        }
        Ok(acc)
    }

    /// Contraction to the levels `0 < c_1 < c_2 < …`.
    pub fn telescope(&self, cuts: &[usize]) -> Result<OrderedBratteliDiagram> {
        if cuts.is_empty() {
            return Err(Error::BadCuts("no cut levels".into()));
        }
        let mut prev = 0;
        for &c in cuts {
            if c <= prev {
                return Err(Error::BadCuts(format!("{cuts:?} is not strictly increasing from 1")));
            }
            if c > self.available() {
                return Err(Error::BadCuts(format!("cut {c} beyond level {}", self.levels.len())));
            }
            prev = c;
        }
        let mut names = vec![self.names[0].clone()];
        let mut levels = Vec::with_capacity(cuts.len());
        let mut prev = 0;
        for &c in cuts {
            levels.push(self.composite(prev, c)?);
            names.push((0..self.vertex_count(c).expect("cut available")).map(|v| self.vertex_name(c, v)).collect());
            prev = c;
        }
        OrderedBratteliDiagram::new(names, levels, Extension::None)
    }

    /// Number of finite paths from `V_0` to each vertex of `V_n`.
    pub fn path_counts(&self, n: usize) -> Vec<u128> {
        let mut counts = vec![1u128; self.names[0].len()];
        for k in 1..=n {
            let d = self.edge_level(k).expect("level available");
            counts = (0..d.ranges)
                .map(|w| d.fiber(w).iter().map(|&i| counts[d.edges[i].source]).sum())
                .collect();
        }
        counts
    }

    /// For stationary diagrams, the number of infinite maximal and minimal
    /// paths: the size of the eventual image of the max-source and
    /// min-source maps of one period.
    pub fn extreme_path_counts(&self) -> Option<(usize, usize)> {
        let Extension::Stationary { period } = self.extension else {
            return None;
        };
        let big = self.levels.len();
        if !self.validate().is_empty() {
            return None;
        }
        let block = self.composite(big - period, big).ok()?;
        let max_map: Vec<usize> = (0..block.ranges)
            .map(|w| block.edges[block.max_edge(w).expect("fiber nonempty")].source)
            .collect();
        let min_map: Vec<usize> = (0..block.ranges)
            .map(|w| block.edges[block.min_edge(w).expect("fiber nonempty")].source)
            .collect();
        Some((eventual_image(&max_map), eventual_image(&min_map)))
    }

    /// Graphviz rendering of the first `depth` levels.
    pub fn to_dot(&self, depth: usize) -> String {
        let depth = depth.min(self.available());
        let mut s = String::from("digraph bratteli {\n  rankdir=TB;\n");
        for n in 0..=depth {
            let _ = writeln!(s, "  subgraph level{n} {{ rank=same;");
            for v in 0..self.vertex_count(n).unwrap_or(0) {
                let _ = writeln!(s, "    \"{n}:{v}\" [label=\"{}\"];", self.vertex_name(n, v));
            }
            s.push_str("  }\n");
        }
        for n in 1..=depth {
            let d = self.edge_level(n).expect("level available");
            for e in d.edges() {
                let _ = writeln!(
                    s,
                    "  \"{}:{}\" -> \"{n}:{}\" [label=\"{}\"];",
                    n - 1,
                    e.source,
                    e.range,
                    e.order
                );
            }
        }
        s.push_str("}\n");
        s
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

fn eventual_image(map: &[usize]) -> usize {
    let mut img: BTreeSet<usize> = (0..map.len()).collect();
    loop {
        let next: BTreeSet<usize> = img.iter().map(|&v| map[v]).collect();
        if next == img {
            return img.len();
        }
        img = next;
    }
}

/// Intertwining data exhibiting order equivalence.
///
/// `g[n]`, `h[m]` are the index maps; `e_prime[n]` goes from `V_n` to
/// `W_{g(n)}` and `f_prime[m]` from `W_m` to `V_{h(m)}`. When `swapped` is
/// set the roles of the two diagrams are exchanged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceWitness {
    pub swapped: bool,
    pub cuts: Vec<usize>,
    pub vertex_maps: Vec<Vec<usize>>,
    pub g: Vec<usize>,
    pub h: Vec<usize>,
    pub e_prime: Vec<OrderedDiagram>,
    pub f_prime: Vec<OrderedDiagram>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EquivalenceVerdict {
    Equivalent(Box<EquivalenceWitness>),
    Inequivalent(String),
    Unknown { bound: usize },
}

impl EquivalenceVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            EquivalenceVerdict::Equivalent(_) => "Equivalent",
            EquivalenceVerdict::Inequivalent(_) => "Inequivalent",
            EquivalenceVerdict::Unknown { .. } => "Unknown",
        }
    }
}

const MAX_COMPOSITE_EDGES: usize = 1 << 14;
const MAX_SKIP: usize = 16;

/// Finds cuts `c` and level-wise vertex bijections with
/// `target ≅ telescope(source, c)` on the first `levels` levels of `target`.
pub fn find_telescope(
    source: &OrderedBratteliDiagram,
    target: &OrderedBratteliDiagram,
    levels: usize,
) -> Option<(Vec<usize>, Vec<Vec<usize>>)> {
    let levels = levels.min(target.available());
    if levels == 0 || source.vertex_count(0) != target.vertex_count(0) {
        return None;
    }
    let mut cuts = Vec::new();
    let mut maps = vec![vec![0usize; source.vertex_count(0)?]];
    if search_cuts(source, target, levels, 0, &mut cuts, &mut maps) {
        Some((cuts, maps))
    } else {
        None
    }
}

fn search_cuts(
    source: &OrderedBratteliDiagram,
    target: &OrderedBratteliDiagram,
    levels: usize,
    prev: usize,
    cuts: &mut Vec<usize>,
    maps: &mut Vec<Vec<usize>>,
) -> bool {
    let m = cuts.len() + 1;
    if m > levels {
        return true;
    }
    let f = target.edge_level(m).expect("target level available");
    let sigma = maps.last().expect("map for previous level").clone();
    let Some(mut acc) = source.edge_level(prev + 1).cloned() else {
        return false;
    };
    let mut c = prev + 1;
    loop {
        if acc.edges.len() > f.edges.len() || acc.edges.len() > MAX_COMPOSITE_EDGES {
            return false;
        }
        if acc.ranges == f.ranges && acc.edges.len() == f.edges.len() {
            for pi in range_bijections(&acc, f, &sigma, 64) {
                cuts.push(c);
                maps.push(pi);
                if search_cuts(source, target, levels, c, cuts, maps) {
                    return true;
                }
                cuts.pop();
                maps.pop();
            }
        }
        if c - prev >= MAX_SKIP {
            return false;
        }
        let Some(next) = source.edge_level(c + 1) else {
            return false;
        };
        acc = match compose(&acc, next) {
            Ok(d) => d,
            Err(_) => return false,
        };
        c += 1;
    }
}

/// Relabels the range vertices of `d` through `pi` (old index to new).
fn relabel_ranges(d: &OrderedDiagram, pi: &[usize], new_count: usize) -> OrderedDiagram {
    let mut fibers = vec![Vec::new(); new_count];
    for w in 0..d.ranges {
        fibers[pi[w]] = d.fiber_sources(w);
    }
    OrderedDiagram::from_fibers(d.sources, &fibers).expect("relabeling keeps endpoints in range")
}

fn relabel_sources(d: &OrderedDiagram, sigma: &[usize], new_count: usize) -> OrderedDiagram {
    let fibers: Vec<Vec<usize>> = (0..d.ranges)
        .map(|w| d.fiber_sources(w).into_iter().map(|s| sigma[s]).collect())
        .collect();
    OrderedDiagram::from_fibers(new_count, &fibers).expect("relabeling keeps endpoints in range")
}

/// Builds the intertwiners of a contraction `W_m = V_{c_m}`:
/// `g(n) = n + 1`, `h(m) = c_m + 1`, `E'_n` the paths `V_n -> V_{c_{n+1}}`
/// and `F'_m = E_{c_m + 1}`, with vertices of `W` read through the maps.
pub fn contraction_witness(
    source: &OrderedBratteliDiagram,
    cuts: &[usize],
    maps: &[Vec<usize>],
    swapped: bool,
) -> Result<EquivalenceWitness> {
    let k = cuts.len();
    let full = |m: usize| if m == 0 { 0 } else { cuts[m - 1] };
    let mut g = Vec::new();
    let mut h = Vec::new();
    let mut e_prime = Vec::new();
    let mut f_prime = Vec::new();
    for n in 0..k {
        let c = full(n + 1);
        let d = source.composite(n, c)?;
        let pi = &maps[n + 1];
        e_prime.push(relabel_ranges(&d, pi, d.ranges));
        g.push(n + 1);
    }
    for m in 0..=k {
        let c = full(m);
        let Some(d) = source.edge_level(c + 1) else {
            break;
        };
        f_prime.push(relabel_sources(d, &maps[m], d.sources));
        h.push(c + 1);
    }
    Ok(EquivalenceWitness {
        swapped,
        cuts: cuts.to_vec(),
        vertex_maps: maps.to_vec(),
        g,
        h,
        e_prime,
        f_prime,
    })
}

/// Replays every intertwining condition whose levels are available.
/// Returns the number of conditions checked.
pub fn replay_witness(
    b1: &OrderedBratteliDiagram,
    b2: &OrderedBratteliDiagram,
    w: &EquivalenceWitness,
) -> std::result::Result<usize, String> {
    let (v, wd) = if w.swapped { (b2, b1) } else { (b1, b2) };
    let mut checked = 0;
    for n in 0..w.e_prime.len() {
        let gn = w.g[n];
        if gn >= w.f_prime.len() {
            continue;
        }
        let lhs = compose(&w.e_prime[n], &w.f_prime[gn]).map_err(|e| e.to_string())?;
        let top = w.h[gn];
        if top > v.available() {
            continue;
        }
        let rhs = v.composite(n, top).map_err(|e| e.to_string())?;
        if !order_equivalent_fixed(&lhs, &rhs) {
            return Err(format!("F'_{gn} o E'_{n} differs from the composite V_{n} -> V_{top}"));
        }
        checked += 1;
    }
    for m in 0..w.f_prime.len() {
        let hm = w.h[m];
        if hm >= w.e_prime.len() {
            continue;
        }
        let ghm = w.g[hm];
        if ghm > w.cuts.len() {
            continue;
        }
        let lhs = compose(&w.f_prime[m], &w.e_prime[hm]).map_err(|e| e.to_string())?;
        let rhs = wd.composite(m, ghm).map_err(|e| e.to_string())?;
        if !order_equivalent_fixed(&lhs, &rhs) {
            return Err(format!("E'_{hm} o F'_{m} differs from the composite W_{m} -> W_{ghm}"));
        }
        checked += 1;
    }
    Ok(checked)
}

/// Bounded semidecision of order equivalence.
///
/// Looks for one diagram as a contraction of the other over `depth_bound`
/// levels (the witness is replay-verified), then for a mismatch in the
/// number of extreme paths of stationary diagrams.
pub fn order_equivalent_bounded(
    b1: &OrderedBratteliDiagram,
    b2: &OrderedBratteliDiagram,
    depth_bound: usize,
) -> EquivalenceVerdict {
    if let (Some((max1, min1)), Some((max2, min2))) = (b1.extreme_path_counts(), b2.extreme_path_counts()) {
        if max1 != max2 {
            return EquivalenceVerdict::Inequivalent(format!("|X_max| is {max1} versus {max2}"));
        }
        if min1 != min2 {
            return EquivalenceVerdict::Inequivalent(format!("|X_min| is {min1} versus {min2}"));
        }
    }
    for (swapped, src, tgt) in [(false, b1, b2), (true, b2, b1)] {
        if let Some((cuts, maps)) = find_telescope(src, tgt, depth_bound) {
            if let Ok(w) = contraction_witness(src, &cuts, &maps, swapped) {
                if replay_witness(b1, b2, &w).is_ok() {
                    return EquivalenceVerdict::Equivalent(Box::new(w));
                }
            }
        }
    }
    EquivalenceVerdict::Unknown { bound: depth_bound }
}

/// The stationary 2-adic diagram: one vertex per level, two edges `0 < 1`.
pub fn dyadic(levels: usize) -> OrderedBratteliDiagram {
    let d = OrderedDiagram::from_fibers(1, &[vec![0, 0]]).expect("two parallel edges");
    OrderedBratteliDiagram::from_levels(vec![d; levels.max(1)], Extension::Stationary { period: 1 })
        .expect("dyadic levels compose")
}

/// Stationary diagram with two vertices per level and exactly two infinite
/// maximal (and two minimal) paths.
pub fn two_extremes(levels: usize) -> OrderedBratteliDiagram {
    let first = OrderedDiagram::from_fibers(1, &[vec![0, 0], vec![0, 0]]).expect("valid level");
    let rest = OrderedDiagram::from_fibers(2, &[vec![1, 0], vec![0, 1]]).expect("valid level");
    let mut lv = vec![first];
    lv.extend(std::iter::repeat(rest).take(levels.max(2) - 1));
    OrderedBratteliDiagram::from_levels(lv, Extension::Stationary { period: 1 }).expect("levels compose")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_adic() -> OrderedDiagram {
        OrderedDiagram::from_fibers(1, &[vec![0, 0]]).unwrap()
    }

    #[test]
    fn dyadic_is_valid() {
        assert!(dyadic(4).validate().is_empty());
        assert!(two_extremes(3).validate().is_empty());
    }

    #[test]
    fn isolated_source_is_reported() {
        let d = OrderedDiagram::from_fibers(2, &[vec![0]]).unwrap();
        let b = OrderedBratteliDiagram::from_levels(
            vec![OrderedDiagram::from_fibers(1, &[vec![0], vec![0]]).unwrap(), d],
            Extension::None,
        )
        .unwrap();
        let v = b.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::SourceSurjectivity);
        assert_eq!(v[0].level, 2);
    }

    #[test]
    fn duplicate_order_is_reported() {
        let d = OrderedDiagram::new(
            1,
            1,
            vec![
                Edge { source: 0, range: 0, order: 0 },
                Edge { source: 0, range: 0, order: 0 },
            ],
        )
        .unwrap();
        let b = OrderedBratteliDiagram::from_levels(vec![d], Extension::None).unwrap();
        assert_eq!(b.validate()[0].kind, ViolationKind::FiberOrder);
    }

    #[test]
    fn compose_ranks_last_edge_first() {
        let c = compose(&two_adic(), &two_adic()).unwrap();
        assert_eq!(c.edges().len(), 4);
        assert_eq!(c.fiber(0).len(), 4);
        let e = OrderedDiagram::from_fibers(2, &[vec![0, 1], vec![1]]).unwrap();
        let f = OrderedDiagram::from_fibers(2, &[vec![1, 0]]).unwrap();
        assert_eq!(compose(&e, &f).unwrap().fiber_sources(0), vec![1, 0, 1]);
        assert!(compose(&two_adic(), &e).is_err());
    }

    #[test]
    fn telescope_errors_and_identity() {
        let b = dyadic(4);
        assert!(b.telescope(&[]).is_err());
        assert!(b.telescope(&[2, 2]).is_err());
        let t = b.telescope(&[1, 2, 3, 4]).unwrap();
        for n in 1..=4 {
            assert!(order_equivalent_fixed(t.edge_level(n).unwrap(), b.edge_level(n).unwrap()));
        }
        let finite = OrderedBratteliDiagram::from_levels(vec![two_adic(); 3], Extension::None).unwrap();
        assert!(finite.telescope(&[4]).is_err());
    }

    #[test]
    fn isomorphism_search() {
        let a = OrderedDiagram::from_fibers(2, &[vec![0, 1], vec![1, 1, 0]]).unwrap();
        let b = OrderedDiagram::from_fibers(2, &[vec![0, 0, 1], vec![1, 0]]).unwrap();
        let w = order_isomorphic(&a, &b).unwrap();
        assert_eq!(w.source_map, vec![1, 0]);
        assert_eq!(w.range_map, vec![1, 0]);
        let c = OrderedDiagram::from_fibers(1, &[vec![0, 0, 0]]).unwrap();
        assert!(order_isomorphic(&two_adic(), &c).is_none());
    }

    #[test]
    fn extreme_counts() {
        assert_eq!(dyadic(2).extreme_path_counts(), Some((1, 1)));
        assert_eq!(two_extremes(2).extreme_path_counts(), Some((2, 2)));
        assert_eq!(
            order_equivalent_bounded(&dyadic(3), &two_extremes(3), 3).label(),
            "Inequivalent"
        );
    }

    #[test]
    fn dyadic_vs_pairs() {
        let b = dyadic(2);
        let t = b.telescope(&[2, 4, 6]).unwrap();
        assert_eq!(t.edge_level(1).unwrap().edges().len(), 4);
        match order_equivalent_bounded(&b, &t, 3) {
            EquivalenceVerdict::Equivalent(w) => {
                assert_eq!(w.cuts, vec![2, 4, 6]);
                assert!(replay_witness(&b, &t, &w).unwrap() > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn path_counts_dyadic() {
        assert_eq!(dyadic(1).path_counts(10), vec![1024]);
    }

    #[test]
    fn dot_has_labels() {
        let s = dyadic(2).to_dot(2);
        assert!(s.contains("label=\"1\""));
        assert!(s.starts_with("digraph"));
    }
}
