//! Kakutani–Rohlin towers of a Bratteli system, their inductive
//! refinement, extraction of an ordered Bratteli diagram, and a finite-depth
//! check that the Veršik map of that diagram is conjugate to the system.

use serde::Serialize;

use crate::bratteli::{Extension, OrderedBratteliDiagram, OrderedDiagram};
use crate::error::{Error, Result};
use crate::pds::BratteliSystem;
use crate::space::{pullback_union_max, ClopenSet, SymbolicSpace};
use crate::versik::{enumerate_paths, is_maximal, is_minimal, path_literal, successor, FinitePath, Step};

/// Floors `Y(k, 0..=J_k)` of one tower.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Tower {
    pub height: usize,
    pub floors: Vec<ClopenSet>,
}

impl Tower {
    pub fn base(&self) -> &ClopenSet {
        &self.floors[0]
    }

    pub fn top(&self) -> &ClopenSet {
        &self.floors[self.height]
    }
}

/// Towers over `Y` ordered by increasing height, with top set `Z`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KRPartition {
    pub y: ClopenSet,
    pub z: ClopenSet,
    pub towers: Vec<Tower>,
}

fn image(s: &BratteliSystem, a: &ClopenSet) -> Result<ClopenSet> {
    Ok(s.phi.image_clopen(&s.space, a)?.canonical(&s.space))
}

fn preimage(s: &BratteliSystem, a: &ClopenSet) -> Result<ClopenSet> {
    Ok(s.phi.preimage_clopen(&s.space, a)?.canonical(&s.space))
}

fn preimage_iter(s: &BratteliSystem, a: &ClopenSet, k: usize) -> Result<ClopenSet> {
    let mut cur = a.clone();
    for _ in 0..k {
        cur = preimage(s, &cur)?;
    }
    Ok(cur)
}

fn union_all(space: &SymbolicSpace, sets: &[&ClopenSet]) -> ClopenSet {
    sets.iter().fold(space.empty(), |acc, s| acc.union(s, space))
}

/// First-return towers over `Y`: `lambda(y) = min{k >= 0 : phi^k(y) ∈ Z}`
/// with `Z = phi^{-1}(Y) ∪ X_max`. The structural properties are verified
/// before returning.
pub fn build_towers(s: &BratteliSystem, y: &ClopenSet) -> Result<KRPartition> {
    let space = &s.space;
    if !s.xmin(y.level.min(s.depth())).is_subset(y, space) {
        return Err(Error::Invalid("Y does not contain the X_min approximation".into()));
    }
    let y = y.canonical(space);
    let z = pullback_union_max(space, &s.phi, &y)?;
    let bound = space.cell_count(s.depth());
    let mut bases: Vec<(usize, ClopenSet)> = Vec::new();
    let mut front = y.clone();
    let mut k = 0;
    while !front.is_empty() {
        if k > bound {
            return Err(Error::LambdaUnbounded(bound));
        }
        let hit = front.intersection(&z, space).canonical(space);
        if !hit.is_empty() {
            bases.push((k, preimage_iter(s, &hit, k)?));
        }
        let rest = front.difference(&z, space);
        front = image(s, &rest)?;
        k += 1;
    }
    let mut towers = Vec::with_capacity(bases.len());
    for (h, base) in bases {
        let mut floors = vec![base];
        for j in 0..h {
            let next = image(s, &floors[j])?;
            floors.push(next);
        }
        towers.push(Tower { height: h, floors });
    }
    let kr = KRPartition { y, z, towers };
    let problems = check_properties(s, &kr)?;
    if let Some(p) = problems.first() {
        return Err(Error::Invalid(format!("tower properties fail: {p}")));
    }
    Ok(kr)
}

/// Exact checks of the tower identities; each failure is described.
pub fn check_properties(s: &BratteliSystem, kr: &KRPartition) -> Result<Vec<String>> {
    let space = &s.space;
    let mut out = Vec::new();
    let floors: Vec<&ClopenSet> = kr.towers.iter().flat_map(|t| t.floors.iter()).collect();
    let deep = floors.iter().map(|f| f.level).max().unwrap_or(1);
    let mut seen = std::collections::BTreeSet::new();
    for f in &floors {
        for c in f.lift(space, deep).cells {
            if !seen.insert(c) {
                out.push(format!("floors overlap at `{}`", space.cell_name(deep, c)));
                break;
            }
        }
    }
    if seen.len() != space.cell_count(deep) {
        out.push("floors do not cover X".into());
    }
    for (k, t) in kr.towers.iter().enumerate() {
        for j in 0..t.height {
            if !image(s, &t.floors[j])?.same_set(&t.floors[j + 1], space) {
                out.push(format!("tower {k}: phi(floor {j}) is not floor {}", j + 1));
            }
        }
    }
    let tops: Vec<&ClopenSet> = kr.towers.iter().map(|t| t.top()).collect();
    if !union_all(space, &tops).same_set(&kr.z, space) {
        out.push("top floors differ from Z".into());
    }
    let firsts: Vec<&ClopenSet> = kr.towers.iter().filter(|t| t.height >= 1).map(|t| &t.floors[1]).collect();
    let moved = image(s, &kr.y.difference(&kr.z, space))?;
    if !union_all(space, &firsts).same_set(&moved, space) {
        out.push("first floors differ from phi(Y \\ Z)".into());
    }
    let bases: Vec<&ClopenSet> = kr.towers.iter().map(|t| t.base()).collect();
    if !union_all(space, &bases).same_set(&kr.y, space) {
        out.push("bases differ from Y".into());
    }
    Ok(out)
}

/// One column `Y_n(k, 0..=J, i)` of a refined stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Column {
    pub tower: usize,
    pub index: usize,
    pub height: usize,
    pub floors: Vec<ClopenSet>,
}

/// A refined stage: towers over `Y_n` whose columns have floors inside
/// single blocks of `P_n ∨ P'_{n-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RefinedStage {
    pub kr: KRPartition,
    pub columns: Vec<Column>,
}

impl RefinedStage {
    /// The partition `P'_n` (all floors of all columns).
    pub fn floor_partition(&self) -> Vec<&ClopenSet> {
        self.columns.iter().flat_map(|c| c.floors.iter()).collect()
    }

    /// The trivial stage `P'_0 = {X}`.
    pub fn trivial(space: &SymbolicSpace) -> RefinedStage {
        let x = space.full(1);
        let tower = Tower {
            height: 0,
            floors: vec![x.clone()],
        };
        RefinedStage {
            kr: KRPartition {
                y: x.clone(),
                z: x.clone(),
                towers: vec![tower],
            },
            columns: vec![Column {
                tower: 0,
                index: 0,
                height: 0,
                floors: vec![x],
            }],
        }
    }
}

fn block_of<'a>(space: &SymbolicSpace, a: &ClopenSet, blocks: &[&'a ClopenSet]) -> Option<&'a ClopenSet> {
    blocks.iter().copied().find(|b| a.is_subset(b, space))
}

/// Refines the towers over `y_n` so that every floor lies in one block of
/// `p_n` and one floor of `prev`. Base pieces are indexed by their least
/// deepest-level cell.
pub fn refine(s: &BratteliSystem, prev: &RefinedStage, p_n: &[ClopenSet], y_n: &ClopenSet) -> Result<RefinedStage> {
    let space = &s.space;
    let kr = build_towers(s, y_n)?;
    let p_blocks: Vec<&ClopenSet> = p_n.iter().collect();
    let q_blocks = prev.floor_partition();
    let d = s.depth();
    let mut columns = Vec::new();
    for (k, t) in kr.towers.iter().enumerate() {
        let mut parts = vec![t.base().clone()];
        for j in 0..=t.height {
            let mut next_parts = Vec::with_capacity(parts.len());
            for p in parts {
                let fj = iterate(s, &p, j)?;
                let mut pieces = vec![p.clone()];
                for blocks in [&p_blocks, &q_blocks] {
                    if block_of(space, &fj, blocks).is_some() {
                        continue;
                    }
                    let mut split = Vec::new();
                    for piece in pieces {
                        let img = iterate(s, &piece, j)?;
                        for b in blocks.iter() {
                            let meet = img.intersection(b, space);
                            if !meet.is_empty() {
                                let back = preimage_iter(s, &meet.canonical(space), j)?;
                                split.push(back);
                            }
                        }
                    }
                    pieces = split;
                }
                next_parts.extend(pieces);
            }
            parts = next_parts;
        }
        parts.sort_by_key(|p| p.lift(space, d).cells.iter().next().copied());
        for (i, base) in parts.into_iter().enumerate() {
            let mut floors = vec![base];
            for j in 0..t.height {
                let next = image(s, &floors[j])?;
                floors.push(next);
            }
            columns.push(Column {
                tower: k,
                index: i,
                height: t.height,
                floors,
            });
        }
    }
    Ok(RefinedStage { kr, columns })
}

fn iterate(s: &BratteliSystem, a: &ClopenSet, j: usize) -> Result<ClopenSet> {
    let mut cur = a.clone();
    for _ in 0..j {
        cur = image(s, &cur)?;
    }
    Ok(cur)
}

/// A sequence `(Y_n, P_n)` of nested sets and partitions.
#[derive(Clone, Debug)]
pub struct Chain {
    pub y: Vec<ClopenSet>,
    pub p: Vec<Vec<ClopenSet>>,
}

impl Chain {
    /// `Y_n` the `X_min` approximation at level `n + offset`, `P_n` the cells
    /// of that level.
    pub fn minimal_cylinders(s: &BratteliSystem, stages: usize, offset: usize) -> Result<Chain> {
        let mut y = Vec::with_capacity(stages);
        let mut p = Vec::with_capacity(stages);
        for n in 1..=stages {
            let l = n + offset;
            if l > s.depth() {
                return Err(Error::ResolutionExhausted { level: l });
            }
            y.push(s.xmin(l));
            p.push((0..s.space.cell_count(l) as u32).map(|c| ClopenSet::new(l, [c])).collect());
        }
        Ok(Chain { y, p })
    }
}

/// The extracted diagram together with the stages and the floor label
/// `j(e)` of every edge.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub diagram: OrderedBratteliDiagram,
    pub stages: Vec<RefinedStage>,
    /// `labels[n - 1][e]` is `j(e)` for edge `e` of level `n`.
    pub labels: Vec<Vec<usize>>,
}

/// Runs the refinement along `chain` and reads off the diagram: an edge
/// from `Y_{n-1}(k', 0, i')` to `Y_n(k, 0, i)` for every floor `l` with
/// `Y_n(k, l, i) ⊆ Y_{n-1}(k', 0, i')`, ordered by `l`.
pub fn extract_diagram(s: &BratteliSystem, chain: &Chain) -> Result<Extraction> {
    let space = &s.space;
    let mut stages = vec![RefinedStage::trivial(space)];
    for (y, p) in chain.y.iter().zip(&chain.p) {
        let prev = stages.last().expect("trivial stage present");
        if !y.is_subset(&prev.kr.y, space) {
            return Err(Error::Invalid("the chain Y_n is not nested".into()));
        }
        let next = refine(s, prev, p, y)?;
        stages.push(next);
    }
    let mut names = vec![vec!["X".to_string()]];
    let mut levels = Vec::new();
    let mut labels = Vec::new();
    for n in 1..stages.len() {
        let (prev, cur) = (&stages[n - 1], &stages[n]);
        let prev_y = &prev.kr.y;
        let mut fibers = Vec::with_capacity(cur.columns.len());
        let mut level_labels = Vec::new();
        for col in &cur.columns {
            let mut fiber = Vec::new();
            for (l, floor) in col.floors.iter().enumerate() {
                if floor.is_disjoint(prev_y, space) {
                    continue;
                }
                let src = prev
                    .columns
                    .iter()
                    .position(|c| floor.is_subset(&c.floors[0], space))
                    .ok_or_else(|| {
                        Error::BrokenContainment(format!(
                            "stage {n}, column {}.{}, floor {l}",
                            col.tower + 1,
                            col.index + 1
                        ))
                    })?;
                fiber.push((src, l));
            }
            let (Some(first), Some(last)) = (fiber.first(), fiber.last()) else {
                return Err(Error::BrokenContainment(format!(
                    "stage {n}: column {}.{} meets no base of the previous stage",
                    col.tower + 1,
                    col.index + 1
                )));
            };
            if first.1 != 0 {
                return Err(Error::Invalid(format!("stage {n}: minimal edge has j = {}", first.1)));
            }
            let expected = col.height as isize - prev.columns[last.0].height as isize;
            if last.1 as isize != expected {
                return Err(Error::Invalid(format!(
                    "stage {n}: maximal edge has j = {}, tower heights give {expected}",
                    last.1
                )));
            }
            level_labels.extend(fiber.iter().map(|x| x.1));
            fibers.push(fiber.into_iter().map(|x| x.0).collect::<Vec<_>>());
        }
        levels.push(OrderedDiagram::from_fibers(prev.columns.len(), &fibers)?);
        labels.push(level_labels);
        names.push(
            cur.columns
                .iter()
                .map(|c| format!("{}.{}", c.tower + 1, c.index + 1))
                .collect(),
        );
    }
    let diagram = OrderedBratteliDiagram::new(names, levels, Extension::None)?;
    if let Some(v) = diagram.validate().first() {
        return Err(Error::Invalid(format!("extracted diagram: {}", v.detail)));
    }
    stages.remove(0);
    Ok(Extraction {
        diagram,
        stages,
        labels,
    })
}

/// Outcome of the finite-depth conjugacy check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ConjugacyVerdict {
    Verified { depth: usize, pairs: usize },
    Counterexample { path: String, reason: String },
}

impl Extraction {
    /// `Psi(p) = Y_n(k_n, sum of j(e_m), i_n)` for a depth-`n` path.
    pub fn psi(&self, diagram: &OrderedBratteliDiagram, p: &FinitePath) -> Option<&ClopenSet> {
        let n = p.depth();
        let total: usize = p.edges.iter().enumerate().map(|(m, &e)| self.labels[m][e]).sum();
        let d = diagram.edge_level(n)?;
        let col = &self.stages[n - 1].columns[d.edge(p.edges[n - 1]).range];
        col.floors.get(total)
    }
}

/// Checks at `depth` that `Psi` partitions `X`, that
/// `phi(Psi(p)) = Psi(successor(p))` for every non-maximal path, and that
/// minimal and maximal paths go to `Y_n` and `Z_n`.
pub fn verify_conjugacy(
    s: &BratteliSystem,
    ex: &Extraction,
    diagram: &OrderedBratteliDiagram,
    depth: usize,
) -> Result<ConjugacyVerdict> {
    let space = &s.space;
    if depth == 0 || depth > ex.stages.len() {
        return Err(Error::ResolutionExhausted { level: depth });
    }
    let paths = enumerate_paths(diagram, depth);
    let fail = |p: &FinitePath, reason: &str| ConjugacyVerdict::Counterexample {
        path: path_literal(diagram, p),
        reason: reason.to_string(),
    };
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        match ex.psi(diagram, p) {
            Some(c) => images.push(c.clone()),
            None => return Ok(fail(p, "floor index exceeds the tower height")),
        }
    }
    let deep = images.iter().map(|c| c.level).max().unwrap_or(1);
    let mut owner = vec![usize::MAX; space.cell_count(deep)];
    for (i, c) in images.iter().enumerate() {
        for cell in c.lift(space, deep).cells {
            if owner[cell as usize] != usize::MAX {
                return Ok(fail(&paths[i], "image overlaps another path's image"));
            }
            owner[cell as usize] = i;
        }
    }
    if let Some(cell) = owner.iter().position(|&o| o == usize::MAX) {
        return Ok(ConjugacyVerdict::Counterexample {
            path: String::new(),
            reason: format!("cell `{}` is not covered", space.cell_name(deep, cell as u32)),
        });
    }
    let index: std::collections::HashMap<&FinitePath, usize> = paths.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut pairs = 0;
    let mut mins = Vec::new();
    let mut maxs = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        if is_minimal(diagram, p) {
            mins.push(&images[i]);
        }
        if is_maximal(diagram, p) {
            maxs.push(&images[i]);
        }
        if let Step::Path(q) = successor(diagram, p) {
            let lhs = image(s, &images[i])?;
            if !lhs.same_set(&images[index[&q]], space) {
                return Ok(fail(p, "phi(Psi(p)) differs from Psi(successor(p))"));
            }
            pairs += 1;
        }
    }
    let stage = &ex.stages[depth - 1].kr;
    if !union_all(space, &mins).same_set(&stage.y, space) {
        return Ok(ConjugacyVerdict::Counterexample {
            path: String::new(),
            reason: "minimal paths do not map onto Y_n".into(),
        });
    }
    if !union_all(space, &maxs).same_set(&stage.z, space) {
        return Ok(ConjugacyVerdict::Counterexample {
            path: String::new(),
            reason: "maximal paths do not map onto Z_n".into(),
        });
    }
    let d = s.depth();
    if !s.xmin(d).is_subset(&stage.y, space) || !s.xmax(d).is_subset(&stage.z, space) {
        return Ok(ConjugacyVerdict::Counterexample {
            path: String::new(),
            reason: "extreme paths miss the X_min or X_max approximation".into(),
        });
    }
    Ok(ConjugacyVerdict::Verified { depth, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::odometer_system;

    #[test]
    fn odometer_single_cell_tower() {
        let s = odometer_system(6);
        let kr = build_towers(&s, &ClopenSet::new(1, [0])).unwrap();
        assert_eq!(kr.towers.len(), 1);
        assert_eq!(kr.towers[0].height, 1);
        assert_eq!(kr.towers[0].floors, vec![ClopenSet::new(1, [0]), ClopenSet::new(1, [1])]);
    }

    #[test]
    fn whole_space_has_height_zero() {
        let s = odometer_system(5);
        let kr = build_towers(&s, &s.space.full(1)).unwrap();
        assert_eq!(kr.towers.len(), 1);
        assert_eq!(kr.towers[0].height, 0);
    }

    #[test]
    fn two_level_cylinder() {
        let s = odometer_system(6);
        let kr = build_towers(&s, &ClopenSet::new(2, [0])).unwrap();
        assert_eq!(kr.towers.iter().map(|t| t.height).collect::<Vec<_>>(), vec![3]);
        assert_eq!(kr.z, ClopenSet::new(2, [3]));
    }

    #[test]
    fn missing_xmin_is_rejected() {
        let s = odometer_system(4);
        assert!(build_towers(&s, &ClopenSet::new(1, [1])).is_err());
    }

    #[test]
    fn odometer_extraction() {
        let s = odometer_system(6);
        let chain = Chain::minimal_cylinders(&s, 4, 0).unwrap();
        let ex = extract_diagram(&s, &chain).unwrap();
        for n in 1..=4 {
            assert_eq!(enumerate_paths(&ex.diagram, n).len(), 1 << n);
        }
        assert_eq!(
            verify_conjugacy(&s, &ex, &ex.diagram, 4).unwrap(),
            ConjugacyVerdict::Verified { depth: 4, pairs: 15 }
        );
    }

    #[test]
    fn trivial_stage() {
        let s = odometer_system(3);
        let chain = Chain {
            y: vec![s.space.full(1)],
            p: vec![vec![s.space.full(1)]],
        };
        let ex = extract_diagram(&s, &chain).unwrap();
        assert_eq!(ex.diagram.edge_level(1).unwrap().edges().len(), 1);
        assert_eq!(
            verify_conjugacy(&s, &ex, &ex.diagram, 1).unwrap(),
            ConjugacyVerdict::Verified { depth: 1, pairs: 0 }
        );
    }
}
