//! Path space of an ordered Bratteli diagram and the Veršik dynamics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::bratteli::OrderedBratteliDiagram;
use crate::error::{Error, Result};
use crate::space::{CellId, CellImage, ClosedApprox, Domain, PartialHomeo, SymbolicSpace, TailRule};

/// A path `e_1 … e_n` from `V_0`, stored as edge indices per level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FinitePath {
    pub edges: Vec<usize>,
}

impl FinitePath {
    pub fn new(edges: Vec<usize>) -> Self {
        FinitePath { edges }
    }

    pub fn depth(&self) -> usize {
        self.edges.len()
    }

    pub fn truncate(&self, n: usize) -> FinitePath {
        FinitePath::new(self.edges[..n.min(self.edges.len())].to_vec())
    }
}

/// Result of one step of the Veršik map on a finite path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Path(FinitePath),
    /// Every edge is extreme; a deeper prefix is needed.
    NeedDeeper,
}

/// Checks consecutive edges and returns the end vertex.
pub fn check_path(b: &OrderedBratteliDiagram, p: &FinitePath) -> Result<usize> {
    if p.edges.is_empty() {
        return Err(Error::Invalid("path of depth 0".into()));
    }
    let mut v = 0;
    for (i, &e) in p.edges.iter().enumerate() {
        let d = b
            .edge_level(i + 1)
            .ok_or_else(|| Error::ResolutionExhausted { level: i + 1 })?;
        if e >= d.edges().len() {
            return Err(Error::Invalid(format!("level {}: no edge {}", i + 1, e)));
        }
        let edge = d.edge(e);
        if edge.source != v {
            return Err(Error::Invalid(format!("edge at level {} does not start at the previous range", i + 1)));
        }
        v = edge.range;
    }
    Ok(v)
}

/// End vertex of a path assumed valid.
pub fn end_vertex(b: &OrderedBratteliDiagram, p: &FinitePath) -> usize {
    let n = p.depth();
    b.edge_level(n).expect("level available").edge(p.edges[n - 1]).range
}

/// Unique minimal (or maximal) path from `V_0` to vertex `v` of `V_n`.
pub fn extreme_path_to(b: &OrderedBratteliDiagram, n: usize, v: usize, maximal: bool) -> FinitePath {
    let mut edges = vec![0; n];
    let mut w = v;
    for k in (1..=n).rev() {
        let d = b.edge_level(k).expect("level available");
        let e = if maximal { d.max_edge(w) } else { d.min_edge(w) }.expect("nonempty fiber");
        edges[k - 1] = e;
        w = d.edge(e).source;
    }
    FinitePath::new(edges)
}

fn step(b: &OrderedBratteliDiagram, p: &FinitePath, forward: bool) -> Step {
    for k in 0..p.depth() {
        let d = b.edge_level(k + 1).expect("level available");
        let next = if forward {
            d.next_in_fiber(p.edges[k])
        } else {
            d.prev_in_fiber(p.edges[k])
        };
        if let Some(f) = next {
            let mut edges = if k == 0 {
                Vec::with_capacity(p.depth())
            } else {
                extreme_path_to(b, k, d.edge(f).source, !forward).edges
            };
            edges.push(f);
            edges.extend_from_slice(&p.edges[k + 1..]);
            return Step::Path(FinitePath::new(edges));
        }
    }
    Step::NeedDeeper
}

/// Veršik successor on depth-`n` paths.
pub fn successor(b: &OrderedBratteliDiagram, p: &FinitePath) -> Step {
    step(b, p, true)
}

/// Veršik predecessor on depth-`n` paths.
pub fn predecessor(b: &OrderedBratteliDiagram, p: &FinitePath) -> Step {
    step(b, p, false)
}

pub fn is_maximal(b: &OrderedBratteliDiagram, p: &FinitePath) -> bool {
    p.edges
        .iter()
        .enumerate()
        .all(|(k, &e)| b.edge_level(k + 1).expect("level available").next_in_fiber(e).is_none())
}

pub fn is_minimal(b: &OrderedBratteliDiagram, p: &FinitePath) -> bool {
    p.edges
        .iter()
        .enumerate()
        .all(|(k, &e)| b.edge_level(k + 1).expect("level available").prev_in_fiber(e).is_none())
}

/// Position of `p` among the depth-`n` paths into its end vertex, in
/// successor order.
pub fn rank_in_fiber(b: &OrderedBratteliDiagram, p: &FinitePath) -> u128 {
    let mut counts = vec![1u128; b.vertex_count(0).unwrap_or(1)];
    let mut rank = 0u128;
    for (k, &e) in p.edges.iter().enumerate() {
        let d = b.edge_level(k + 1).expect("level available");
        let w = d.edge(e).range;
        for &f in d.fiber(w) {
            if f == e {
                break;
            }
            rank += counts[d.edge(f).source];
        }
        counts = (0..d.range_count())
            .map(|w| d.fiber(w).iter().map(|&f| counts[d.edge(f).source]).sum())
            .collect();
    }
    rank
}

/// All depth-`level` paths, sorted by end vertex and then successor order.
pub fn enumerate_paths(b: &OrderedBratteliDiagram, level: usize) -> Vec<FinitePath> {
    let mut cur: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
    for n in 1..=level {
        let d = b.edge_level(n).expect("level available");
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); d.source_count()];
        for (i, e) in d.edges().iter().enumerate() {
            out_edges[e.source].push(i);
        }
        cur = cur
            .into_iter()
            .flat_map(|(v, p)| {
                out_edges[v]
                    .iter()
                    .map(|&e| {
                        let mut q = p.clone();
                        q.push(e);
                        (d.edge(e).range, q)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    let mut paths: Vec<(usize, u128, FinitePath)> = cur
        .into_iter()
        .map(|(v, e)| {
            let p = FinitePath::new(e);
            (v, rank_in_fiber(b, &p), p)
        })
        .collect();
    paths.sort_by(|a, c| (a.0, a.1).cmp(&(c.0, c.1)));
    paths.into_iter().map(|x| x.2).collect()
}

/// Rule fixing all edges beyond a finite prefix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Tail {
    /// Least-indexed maximal edge out of the current vertex.
    Max,
    /// Least-indexed minimal edge out of the current vertex.
    Min,
    /// At absolute level `L` take the edge of order index
    /// `word[(L - 1) mod len]` out of the current vertex (least range first).
    Periodic(Vec<usize>),
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tail::Max => write!(f, "max"),
            Tail::Min => write!(f, "min"),
            Tail::Periodic(w) => {
                let s: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "per({})", s.join(""))
            }
        }
    }
}

impl Tail {
    pub fn parse(s: &str) -> Result<Tail> {
        match s.trim() {
            "max" => Ok(Tail::Max),
            "min" => Ok(Tail::Min),
            t if t.starts_with("per(") && t.ends_with(')') => {
                let body = &t[4..t.len() - 1];
                let word: Option<Vec<usize>> = if body.contains(',') {
                    body.split(',').map(|x| x.trim().parse().ok()).collect()
                } else {
                    body.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
                };
                match word {
                    Some(w) if !w.is_empty() => Ok(Tail::Periodic(w)),
                    _ => Err(Error::Invalid(format!("bad periodic tail `{t}`"))),
                }
            }
            t => Err(Error::Invalid(format!("unknown tail `{t}`"))),
        }
    }

    /// Edge taken at absolute level `level` from vertex `v` of `V_{level-1}`.
    pub fn edge_from(&self, b: &OrderedBratteliDiagram, level: usize, v: usize) -> Option<usize> {
        let d = b.edge_level(level)?;
        let fits = |i: usize| {
            let e = d.edge(i);
            e.source == v
                && match self {
                    Tail::Max => d.max_edge(e.range) == Some(i),
                    Tail::Min => d.min_edge(e.range) == Some(i),
                    Tail::Periodic(w) => d.rank(i) == w[(level - 1) % w.len()],
                }
        };
        (0..d.edges().len())
            .filter(|&i| fits(i))
            .min_by_key(|&i| (d.edge(i).range, i))
    }
}

/// A point of the path space: a finite prefix and a tail rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PathPoint {
    pub prefix: FinitePath,
    pub tail: Tail,
}

impl PathPoint {
    pub fn new(prefix: FinitePath, tail: Tail) -> Self {
        PathPoint { prefix, tail }
    }

    /// The first `n` edges, extending the prefix with the tail rule.
    pub fn prefix_at(&self, b: &OrderedBratteliDiagram, n: usize) -> Result<FinitePath> {
        if n <= self.prefix.depth() {
            return Ok(self.prefix.truncate(n));
        }
        let mut edges = self.prefix.edges.clone();
        let mut v = if edges.is_empty() { 0 } else { end_vertex(b, &self.prefix) };
        for level in edges.len() + 1..=n {
            let e = self
                .tail
                .edge_from(b, level, v)
                .ok_or(Error::ResolutionExhausted { level })?;
            v = b.edge_level(level).expect("level available").edge(e).range;
            edges.push(e);
        }
        Ok(FinitePath::new(edges))
    }
}

/// `phi(x)` with its prefix reported to `target_depth`.
pub fn successor_point(b: &OrderedBratteliDiagram, x: &PathPoint, target_depth: usize) -> Result<PathPoint> {
    let limit = if b.is_infinite() { 4096 } else { b.materialized() };
    let mut n = x.prefix.depth().max(1);
    loop {
        if n > limit {
            return Err(match x.tail {
                Tail::Max => Error::MaximalPoint,
                _ => Error::ResolutionExhausted { level: limit },
            });
        }
        let p = x.prefix_at(b, n)?;
        if let Step::Path(q) = successor(b, &p) {
            let mut out = PathPoint::new(q, x.tail.clone());
            out.prefix = out.prefix_at(b, target_depth.max(n))?;
            return Ok(out);
        }
        if x.tail == Tail::Max && n >= x.prefix.depth() {
            return Err(Error::MaximalPoint);
        }
        n += 1;
    }
}

/// Counting cocycle value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CocycleValue {
    Value(i128),
    NotCofinal,
}

/// `d(x, y)`: signed number of successor steps from `x` to `y`, decided at
/// the given depth.
pub fn counting_cocycle(
    b: &OrderedBratteliDiagram,
    x: &PathPoint,
    y: &PathPoint,
    depth: usize,
) -> Result<CocycleValue> {
    if x.tail != y.tail {
        return Ok(CocycleValue::NotCofinal);
    }
    let l = depth.max(x.prefix.depth()).max(y.prefix.depth());
    let px = x.prefix_at(b, l)?;
    let py = y.prefix_at(b, l)?;
    if end_vertex(b, &px) != end_vertex(b, &py) {
        return Ok(CocycleValue::NotCofinal);
    }
    Ok(CocycleValue::Value(rank_in_fiber(b, &py) as i128 - rank_in_fiber(b, &px) as i128))
}

/// Outcome of a bounded covering check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Coverage {
    /// Least number of iterates needed.
    Satisfied(usize),
    FailedUpTo(usize),
}

/// Least `N` with every depth-`d` path in `∪_{n<=N} phi^n(U)` (or `phi^{-n}`
/// when `forward` is false), at cylinder level.
pub fn check_orbit_cofinality(
    b: &OrderedBratteliDiagram,
    u: &BTreeSet<FinitePath>,
    depth: usize,
    bound: usize,
    forward: bool,
) -> Coverage {
    let all = enumerate_paths(b, depth);
    let total = all.len();
    let mut covered: BTreeSet<FinitePath> = u.iter().map(|p| p.truncate(depth)).collect();
    let mut frontier: Vec<FinitePath> = covered.iter().cloned().collect();
    for n in 0..=bound {
        if covered.len() == total {
            return Coverage::Satisfied(n);
        }
        let mut next = Vec::new();
        for p in &frontier {
            if let Step::Path(q) = step(b, p, forward) {
                if covered.insert(q.clone()) {
                    next.push(q);
                }
            }
        }
        frontier = next;
    }
    Coverage::FailedUpTo(bound)
}

/// Renders a path as comma-separated order indices with its end vertex.
pub fn path_literal(b: &OrderedBratteliDiagram, p: &FinitePath) -> String {
    let ranks: Vec<String> = p
        .edges
        .iter()
        .enumerate()
        .map(|(k, &e)| b.edge_level(k + 1).expect("level available").rank(e).to_string())
        .collect();
    let v = end_vertex(b, p);
    format!("{}@{}", ranks.join(","), b.vertex_name(p.depth(), v))
}

/// Parses `i_1,…,i_n[@vertex]`; the end vertex may be omitted when `V_n`
/// is a single vertex.
pub fn parse_path(b: &OrderedBratteliDiagram, s: &str) -> Result<FinitePath> {
    let (body, vertex) = match s.split_once('@') {
        Some((a, v)) => (a, Some(v.trim())),
        None => (s, None),
    };
    let ranks: Vec<usize> = body
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad path literal `{s}`"))))
        .collect::<Result<_>>()?;
    let n = ranks.len();
    if n == 0 {
        return Err(Error::Invalid("empty path literal".into()));
    }
    let top = b
        .vertex_count(n)
        .ok_or(Error::ResolutionExhausted { level: n })?;
    let mut w = match vertex {
        Some(v) => b
            .vertex_by_name(n, v)
            .ok_or_else(|| Error::UnknownName(v.to_string()))?,
        None if top == 1 => 0,
        None => return Err(Error::Invalid(format!("`{s}` needs an end vertex: level {n} has {top}"))),
    };
    let mut edges = vec![0; n];
    for k in (1..=n).rev() {
        let d = b.edge_level(k).expect("level available");
        let e = *d
            .fiber(w)
            .get(ranks[k - 1])
            .ok_or_else(|| Error::Invalid(format!("level {k}: fiber has no position {}", ranks[k - 1])))?;
        edges[k - 1] = e;
        w = d.edge(e).source;
    }
    Ok(FinitePath::new(edges))
}

/// The Veršik system of a diagram as a symbolic space: level-`n` cells are
/// depth-`n` paths, the map is the successor, and the tail rules are
/// `max` and `min`.
#[derive(Clone, Debug)]
pub struct PathSpace {
    pub space: SymbolicSpace,
    pub phi: PartialHomeo,
    /// `paths[n - 1][c]` is the depth-`n` path of cell `c`.
    pub paths: Vec<Vec<FinitePath>>,
    index: Vec<HashMap<FinitePath, CellId>>,
}

impl PathSpace {
    pub fn cell_of(&self, p: &FinitePath) -> Option<CellId> {
        self.index.get(p.depth().checked_sub(1)?)?.get(p).copied()
    }

    pub fn path_of(&self, level: usize, cell: CellId) -> &FinitePath {
        &self.paths[level - 1][cell as usize]
    }
}

pub fn path_space(b: &OrderedBratteliDiagram, depth: usize) -> Result<PathSpace> {
    if depth == 0 || depth > b.available() {
        return Err(Error::ResolutionExhausted { level: depth });
    }
    let paths: Vec<Vec<FinitePath>> = (1..=depth).map(|n| enumerate_paths(b, n)).collect();
    let index: Vec<HashMap<FinitePath, CellId>> = paths
        .iter()
        .map(|lv| lv.iter().enumerate().map(|(i, p)| (p.clone(), i as CellId)).collect())
        .collect();
    let names: Vec<Vec<String>> = paths
        .iter()
        .map(|lv| lv.iter().map(|p| path_literal(b, p)).collect())
        .collect();
    let parents: Vec<Vec<CellId>> = paths
        .iter()
        .enumerate()
        .map(|(l, lv)| {
            if l == 0 {
                Vec::new()
            } else {
                lv.iter().map(|p| index[l - 1][&p.truncate(l)]).collect()
            }
        })
        .collect();
    let tail_table = |t: &Tail| -> Vec<Vec<Option<CellId>>> {
        (1..depth)
            .map(|l| {
                paths[l - 1]
                    .iter()
                    .map(|p| {
                        let v = end_vertex(b, p);
                        t.edge_from(b, l + 1, v).map(|e| {
                            let mut q = p.edges.clone();
                            q.push(e);
                            index[l][&FinitePath::new(q)]
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let tails = vec![
        TailRule::new("max", tail_table(&Tail::Max)),
        TailRule::new("min", tail_table(&Tail::Min)),
    ];
    let space = SymbolicSpace::new(names, parents, tails)?;
    let forward: Vec<Vec<CellImage>> = paths
        .iter()
        .enumerate()
        .map(|(l, lv)| {
            lv.iter()
                .map(|p| match successor(b, p) {
                    Step::Path(q) => CellImage::Resolved(index[l][&q]),
                    Step::NeedDeeper => CellImage::Unresolved,
                })
                .collect()
        })
        .collect();
    let deep = &paths[depth - 1];
    let xmax = ClosedApprox::from_deep_cells(
        &space,
        (0..deep.len()).filter(|&i| is_maximal(b, &deep[i])).map(|i| i as CellId),
    );
    let xmin = ClosedApprox::from_deep_cells(
        &space,
        (0..deep.len()).filter(|&i| is_minimal(b, &deep[i])).map(|i| i as CellId),
    );
    let phi = PartialHomeo::new(
        &space,
        Domain::Complement(xmax),
        Domain::Complement(xmin),
        forward,
        BTreeMap::new(),
    )?;
    Ok(PathSpace {
        space,
        phi,
        paths,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bratteli::dyadic;

    fn p(b: &OrderedBratteliDiagram, s: &str) -> FinitePath {
        parse_path(b, s).unwrap()
    }

    #[test]
    fn successor_is_binary_increment() {
        let b = dyadic(1);
        assert_eq!(successor(&b, &p(&b, "1,1,0")), Step::Path(p(&b, "0,0,1")));
        assert_eq!(successor(&b, &p(&b, "1,1,1")), Step::NeedDeeper);
        assert_eq!(predecessor(&b, &p(&b, "0,0,1")), Step::Path(p(&b, "1,1,0")));
        assert_eq!(predecessor(&b, &p(&b, "0,0")), Step::NeedDeeper);
    }

    #[test]
    fn ranks() {
        let b = dyadic(1);
        assert_eq!(rank_in_fiber(&b, &p(&b, "0,0,0")), 0);
        assert_eq!(rank_in_fiber(&b, &p(&b, "1,1,0")), 3);
        assert_eq!(rank_in_fiber(&b, &p(&b, "1,1,1")), 7);
    }

    #[test]
    fn enumeration_counts() {
        let b = dyadic(1);
        assert_eq!(enumerate_paths(&b, 3).len(), 8);
        assert_eq!(enumerate_paths(&b, 1), vec![FinitePath::new(vec![0]), FinitePath::new(vec![1])]);
    }

    #[test]
    fn cocycle_examples() {
        let b = dyadic(1);
        let x = PathPoint::new(p(&b, "0,0,0"), Tail::Min);
        let y = PathPoint::new(p(&b, "1,1,0"), Tail::Min);
        assert_eq!(counting_cocycle(&b, &x, &y, 3).unwrap(), CocycleValue::Value(3));
        assert_eq!(counting_cocycle(&b, &y, &x, 3).unwrap(), CocycleValue::Value(-3));
        assert_eq!(counting_cocycle(&b, &x, &x, 5).unwrap(), CocycleValue::Value(0));
        let z = PathPoint::new(p(&b, "0"), Tail::Max);
        assert_eq!(counting_cocycle(&b, &x, &z, 3).unwrap(), CocycleValue::NotCofinal);
    }

    #[test]
    fn successor_point_keeps_tail() {
        let b = dyadic(1);
        let x = PathPoint::new(p(&b, "0"), Tail::Max);
        let y = successor_point(&b, &x, 1).unwrap();
        assert_eq!(y.prefix, p(&b, "1"));
        assert_eq!(y.tail, Tail::Max);
        let top = PathPoint::new(p(&b, "1"), Tail::Max);
        assert_eq!(successor_point(&b, &top, 3), Err(Error::MaximalPoint));
        let carry = PathPoint::new(p(&b, "1,1"), Tail::Min);
        assert_eq!(successor_point(&b, &carry, 3).unwrap().prefix, p(&b, "0,0,1"));
    }

    #[test]
    fn orbit_cover() {
        let b = dyadic(1);
        let u: BTreeSet<_> = [p(&b, "0,0,0")].into_iter().collect();
        assert_eq!(check_orbit_cofinality(&b, &u, 3, 20, true), Coverage::Satisfied(7));
        let all: BTreeSet<_> = enumerate_paths(&b, 3).into_iter().collect();
        assert_eq!(check_orbit_cofinality(&b, &all, 3, 0, true), Coverage::Satisfied(0));
        let v: BTreeSet<_> = [p(&b, "1,1,1")].into_iter().collect();
        assert_eq!(check_orbit_cofinality(&b, &v, 3, 20, false), Coverage::Satisfied(7));
    }

    #[test]
    fn tails_parse_and_extend() {
        let b = dyadic(1);
        let t = Tail::parse("per(10)").unwrap();
        assert_eq!(t, Tail::Periodic(vec![1, 0]));
        assert_eq!(t.to_string(), "per(10)");
        let x = PathPoint::new(p(&b, "0"), t);
        assert_eq!(x.prefix_at(&b, 4).unwrap(), p(&b, "0,0,1,0"));
        assert!(Tail::parse("sideways").is_err());
    }

    #[test]
    fn path_space_tables() {
        let b = dyadic(1);
        let ps = path_space(&b, 4).unwrap();
        assert_eq!(ps.space.cell_count(4), 16);
        assert!(ps.phi.validate(&ps.space).is_empty());
        let c = ps.cell_of(&p(&b, "1,1,0")).unwrap();
        let img = ps.phi.cell_image(3, c);
        assert_eq!(img, CellImage::Resolved(ps.cell_of(&p(&b, "0,0,1")).unwrap()));
        assert_eq!(ps.space.cell_name(3, c), "1,1,0@v0");
    }

    #[test]
    fn literal_errors() {
        let b = dyadic(1);
        assert!(parse_path(&b, "").is_err());
        assert!(parse_path(&b, "2").is_err());
        assert!(parse_path(&b, "0@w").is_err());
    }
}
