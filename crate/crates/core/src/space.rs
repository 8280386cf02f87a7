//! Finitely presented zero-dimensional compact spaces.
//!
//! A [`SymbolicSpace`] is a chain of finite partitions `P_1 ⊑ P_2 ⊑ … ⊑ P_D`
//! materialized down to `depth_bound = D`. Cells of `P_n` are clopen sets;
//! every cell of `P_{n+1}` has exactly one parent in `P_n`. Tail rules pick a
//! child for every cell and so extend a finite chain of cells to a point.
//!
//! At the finest level a point is known only through its level-`D` cell; all
//! pointwise dynamics in this crate act on level-`D` cells ("points at
//! resolution `D`").

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CellId = u32;

/// Default materialized depth.
pub const DEFAULT_DEPTH: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Level {
    names: Vec<String>,
    parent: Vec<CellId>,
    children: Vec<Vec<CellId>>,
}

/// A deterministic rule choosing one child for every accepted cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TailRule {
    pub name: String,
    /// `child[l][c]` is the chosen child at level `l + 2` of cell `c` at level `l + 1`.
    child: Vec<Vec<Option<CellId>>>,
}

impl TailRule {
    pub fn new(name: impl Into<String>, child: Vec<Vec<Option<CellId>>>) -> Self {
        TailRule {
            name: name.into(),
            child,
        }
    }

    pub fn child(&self, level: usize, cell: CellId) -> Option<CellId> {
        self.child
            .get(level - 1)
            .and_then(|row| row.get(cell as usize).copied().flatten())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicSpace {
    levels: Vec<Level>,
    tails: Vec<TailRule>,
    index: Vec<HashMap<String, CellId>>,
}

impl SymbolicSpace {
    /// `names[l]` lists the cells of level `l + 1`; `parents[l]` gives, for
    /// level `l + 1`, the parent cell at level `l` (ignored for level 1).
    pub fn new(
        names: Vec<Vec<String>>,
        parents: Vec<Vec<CellId>>,
        tails: Vec<TailRule>,
    ) -> Result<Self> {
        if names.is_empty() || names[0].is_empty() {
            return Err(Error::Invalid("the level-1 partition must be nonempty".into()));
        }
        if parents.len() != names.len() {
            return Err(Error::Invalid("one parent table per level is required".into()));
        }
        let depth = names.len();
        let mut levels = Vec::with_capacity(depth);
        for (l, (nm, par)) in names.into_iter().zip(parents).enumerate() {
            if l > 0 && par.len() != nm.len() {
                return Err(Error::Invalid(format!(
                    "level {}: {} cells but {} parent entries",
                    l + 1,
                    nm.len(),
                    par.len()
                )));
            }
            let n = nm.len();
            levels.push(Level {
                names: nm,
                parent: if l == 0 { Vec::new() } else { par },
                children: vec![Vec::new(); n],
            });
        }
        for l in 1..depth {
            let above = levels[l - 1].names.len();
            let par = levels[l].parent.clone();
            for (c, &p) in par.iter().enumerate() {
                if p as usize >= above {
                    return Err(Error::Invalid(format!(
                        "level {}: cell {} has parent {} out of range",
                        l + 1,
                        c,
                        p
                    )));
                }
                levels[l - 1].children[p as usize].push(c as CellId);
            }
            if let Some(c) = levels[l - 1].children.iter().position(|ch| ch.is_empty()) {
                return Err(Error::Invalid(format!(
                    "level {}: cell `{}` has no children",
                    l,
                    levels[l - 1].names[c]
                )));
            }
        }
        let mut index = Vec::with_capacity(depth);
        for (l, lv) in levels.iter().enumerate() {
            let mut m = HashMap::with_capacity(lv.names.len());
            for (i, nm) in lv.names.iter().enumerate() {
                if m.insert(nm.clone(), i as CellId).is_some() {
                    return Err(Error::Invalid(format!("level {}: duplicate cell `{}`", l + 1, nm)));
                }
            }
            index.push(m);
        }
        let space = SymbolicSpace {
            levels,
            tails,
            index,
        };
        for t in &space.tails {
            for l in 1..depth {
                for c in 0..space.cell_count(l) as CellId {
                    if let Some(ch) = t.child(l, c) {
                        if space.parent(l + 1, ch) != c {
                            return Err(Error::Invalid(format!(
                                "tail `{}`: level {} cell {} -> {} is not a child",
                                t.name, l, c, ch
                            )));
                        }
                    }
                }
            }
        }
        Ok(space)
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn cell_count(&self, level: usize) -> usize {
        self.levels[level - 1].names.len()
    }

    pub fn parent(&self, level: usize, cell: CellId) -> CellId {
        self.levels[level - 1].parent[cell as usize]
    }

    pub fn children(&self, level: usize, cell: CellId) -> &[CellId] {
        &self.levels[level - 1].children[cell as usize]
    }

    pub fn cell_name(&self, level: usize, cell: CellId) -> &str {
        &self.levels[level - 1].names[cell as usize]
    }

    pub fn cell_by_name(&self, level: usize, name: &str) -> Option<CellId> {
        self.index.get(level.wrapping_sub(1))?.get(name).copied()
    }

    pub fn tails(&self) -> &[TailRule] {
        &self.tails
    }

    pub fn tail_by_name(&self, name: &str) -> Option<usize> {
        self.tails.iter().position(|t| t.name == name)
    }

    /// Ancestor at `to` of `cell` at level `from` (`to <= from`).
    pub fn ancestor(&self, from: usize, cell: CellId, to: usize) -> CellId {
        let mut c = cell;
        let mut l = from;
        while l > to {
            c = self.parent(l, c);
            l -= 1;
        }
        c
    }

    /// Chain of ancestors `[c_1, …, c_level]` ending at `cell`.
    pub fn chain(&self, level: usize, cell: CellId) -> Vec<CellId> {
        let mut out = vec![0; level];
        let mut c = cell;
        for l in (1..=level).rev() {
            out[l - 1] = c;
            if l > 1 {
                c = self.parent(l, c);
            }
        }
        out
    }

    /// All descendants of `cell` (at `level`) at the deeper level `to`.
    pub fn descendants(&self, level: usize, cell: CellId, to: usize) -> Vec<CellId> {
        let mut cur = vec![cell];
        for l in level..to {
            cur = cur
                .iter()
                .flat_map(|&c| self.children(l, c).iter().copied())
                .collect();
        }
        cur
    }

    pub fn full(&self, level: usize) -> ClopenSet {
        ClopenSet::new(level, 0..self.cell_count(level) as CellId)
    }

    pub fn empty(&self) -> ClopenSet {
        ClopenSet::new(1, std::iter::empty())
    }

    pub fn cell_at(&self, point: &Point, level: usize) -> Result<CellId> {
        if level == 0 || level > self.depth() {
            return Err(Error::ResolutionExhausted { level });
        }
        if point.prefix.is_empty() {
            return Err(Error::Invalid("point with empty prefix".into()));
        }
        if level <= point.prefix.len() {
            return Ok(point.prefix[level - 1]);
        }
        let rule = self
            .tails
            .get(point.tail)
            .ok_or_else(|| Error::Invalid(format!("unknown tail rule {}", point.tail)))?;
        let mut l = point.prefix.len();
        let mut c = point.prefix[l - 1];
        while l < level {
            c = rule.child(l, c).ok_or_else(|| {
                Error::Invalid(format!("tail `{}` does not accept cell {} at level {}", rule.name, c, l))
            })?;
            l += 1;
        }
        Ok(c)
    }

    /// The level-`D` cell of a point.
    pub fn resolve(&self, point: &Point) -> Result<CellId> {
        self.cell_at(point, self.depth())
    }

    /// Checks refine-compatibility of the prefix and tail acceptance.
    pub fn check_point(&self, point: &Point) -> Result<()> {
        for l in 2..=point.prefix.len().min(self.depth()) {
            if self.parent(l, point.prefix[l - 1]) != point.prefix[l - 2] {
                return Err(Error::Invalid(format!("prefix not refine-compatible at level {l}")));
            }
        }
        self.resolve(point).map(|_| ())
    }

    /// The point whose prefix is the full chain of `cell` at `level`.
    pub fn point_at(&self, level: usize, cell: CellId, tail: usize) -> Point {
        Point {
            prefix: self.chain(level, cell),
            tail,
        }
    }

    pub fn point_by_names(&self, names: &[&str], tail: &str) -> Result<Point> {
        let mut prefix = Vec::with_capacity(names.len());
        for (i, nm) in names.iter().enumerate() {
            prefix.push(
                self.cell_by_name(i + 1, nm)
                    .ok_or_else(|| Error::UnknownName(nm.to_string()))?,
            );
        }
        let tail = self
            .tail_by_name(tail)
            .ok_or_else(|| Error::UnknownName(tail.to_string()))?;
        let p = Point { prefix, tail };
        self.check_point(&p)?;
        Ok(p)
    }
}

/// A point: a finite compatible prefix of cells plus the tail rule that
/// resolves all deeper levels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub prefix: Vec<CellId>,
    pub tail: usize,
}

/// How a cell sits relative to a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    Partial,
}

/// A finite union of cells of one level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClopenSet {
    pub level: usize,
    pub cells: BTreeSet<CellId>,
}

impl ClopenSet {
    pub fn new(level: usize, cells: impl IntoIterator<Item = CellId>) -> Self {
        ClopenSet {
            level: level.max(1),
            cells: cells.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// The same set expressed with cells of the deeper `level`.
    pub fn lift(&self, space: &SymbolicSpace, level: usize) -> ClopenSet {
        assert!(level >= self.level, "lift to a coarser level");
        if level == self.level {
            return self.clone();
        }
        ClopenSet::new(
            level,
            self.cells
                .iter()
                .flat_map(|&c| space.descendants(self.level, c, level)),
        )
    }

    /// Coarsest exact representation: sibling-complete families are merged
    /// into their parent until no merge applies.
    pub fn canonical(&self, space: &SymbolicSpace) -> ClopenSet {
        let mut cur = self.clone();
        if cur.is_empty() {
            return ClopenSet::new(1, std::iter::empty());
        }
        while cur.level > 1 {
            let mut by_parent: BTreeMap<CellId, usize> = BTreeMap::new();
            for &c in &cur.cells {
                *by_parent.entry(space.parent(cur.level, c)).or_default() += 1;
            }
            let complete = by_parent
                .iter()
                .all(|(&p, &n)| space.children(cur.level - 1, p).len() == n);
            if !complete {
                break;
            }
            cur = ClopenSet::new(cur.level - 1, by_parent.into_keys());
        }
        cur
    }

    fn common(&self, other: &ClopenSet, space: &SymbolicSpace) -> (ClopenSet, ClopenSet) {
        let l = self.level.max(other.level);
        (self.lift(space, l), other.lift(space, l))
    }

    pub fn union(&self, other: &ClopenSet, space: &SymbolicSpace) -> ClopenSet {
        let (a, b) = self.common(other, space);
        ClopenSet::new(a.level, a.cells.union(&b.cells).copied())
    }

    pub fn intersection(&self, other: &ClopenSet, space: &SymbolicSpace) -> ClopenSet {
        let (a, b) = self.common(other, space);
        ClopenSet::new(a.level, a.cells.intersection(&b.cells).copied())
    }

    pub fn difference(&self, other: &ClopenSet, space: &SymbolicSpace) -> ClopenSet {
        let (a, b) = self.common(other, space);
        ClopenSet::new(a.level, a.cells.difference(&b.cells).copied())
    }

    pub fn complement(&self, space: &SymbolicSpace) -> ClopenSet {
        space.full(self.level).difference(self, space)
    }

    pub fn is_subset(&self, other: &ClopenSet, space: &SymbolicSpace) -> bool {
        let (a, b) = self.common(other, space);
        a.cells.is_subset(&b.cells)
    }

    pub fn is_disjoint(&self, other: &ClopenSet, space: &SymbolicSpace) -> bool {
        let (a, b) = self.common(other, space);
        a.cells.is_disjoint(&b.cells)
    }

    pub fn same_set(&self, other: &ClopenSet, space: &SymbolicSpace) -> bool {
        let (a, b) = self.common(other, space);
        a.cells == b.cells
    }

    pub fn is_full(&self, space: &SymbolicSpace) -> bool {
        self.len() == space.cell_count(self.level)
    }

    /// Position of the cell `cell` at `level` relative to this set.
    pub fn membership(&self, space: &SymbolicSpace, level: usize, cell: CellId) -> Membership {
        if level >= self.level {
            if self.cells.contains(&space.ancestor(level, cell, self.level)) {
                Membership::Inside
            } else {
                Membership::Outside
            }
        } else {
            let desc = space.descendants(level, cell, self.level);
            let n = desc.iter().filter(|c| self.cells.contains(c)).count();
            if n == 0 {
                Membership::Outside
            } else if n == desc.len() {
                Membership::Inside
            } else {
                Membership::Partial
            }
        }
    }

    pub fn contains_point(&self, space: &SymbolicSpace, point: &Point) -> Result<bool> {
        Ok(self.cells.contains(&space.cell_at(point, self.level)?))
    }

    pub fn names(&self, space: &SymbolicSpace) -> Vec<String> {
        self.cells
            .iter()
            .map(|&c| space.cell_name(self.level, c).to_string())
            .collect()
    }
}

/// Descending clopen approximations `A_1 ⊇ A_2 ⊇ … ⊇ A_D` of a closed set,
/// one per level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedApprox {
    pub levels: Vec<ClopenSet>,
}

impl ClosedApprox {
    /// Approximation of a finite set of points given by their level-`D` cells.
    pub fn from_deep_cells(space: &SymbolicSpace, cells: impl IntoIterator<Item = CellId>) -> Self {
        let d = space.depth();
        let deep: Vec<CellId> = cells.into_iter().collect();
        let levels = (1..=d)
            .map(|l| ClopenSet::new(l, deep.iter().map(|&c| space.ancestor(d, c, l))))
            .collect();
        ClosedApprox { levels }
    }

    /// Exact approximation of a clopen set.
    pub fn from_clopen(space: &SymbolicSpace, set: &ClopenSet) -> Self {
        let d = space.depth();
        let deep = set.lift(space, d);
        ClosedApprox::from_deep_cells(space, deep.cells)
    }

    pub fn at(&self, level: usize) -> &ClopenSet {
        &self.levels[level - 1]
    }

    pub fn deepest(&self) -> &ClopenSet {
        self.levels.last().expect("approximation has at least one level")
    }

    pub fn is_nested(&self, space: &SymbolicSpace) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].is_subset(&w[0], space))
    }
}

/// Domain (or range) of a partial homeomorphism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    /// The domain is exactly this clopen set.
    Exact(ClopenSet),
    /// The domain is `X` minus a closed set given by its approximations.
    Complement(ClosedApprox),
}

impl Domain {
    pub fn whole(space: &SymbolicSpace) -> Domain {
        Domain::Exact(space.full(1))
    }

    /// Does the point with level-`D` cell `cell` belong to the domain?
    pub fn contains_deep(&self, space: &SymbolicSpace, cell: CellId) -> bool {
        let d = space.depth();
        match self {
            Domain::Exact(s) => s.membership(space, d, cell) == Membership::Inside,
            Domain::Complement(a) => !a.deepest().cells.contains(&cell),
        }
    }

    /// Approximation at `level` of the removed closed set `X \ dom`.
    pub fn removed_at(&self, space: &SymbolicSpace, level: usize) -> ClopenSet {
        match self {
            Domain::Exact(s) => {
                let comp = s.complement(space);
                if level >= comp.level {
                    comp.lift(space, level)
                } else {
                    ClopenSet::new(
                        level,
                        comp.cells.iter().map(|&c| space.ancestor(comp.level, c, level)),
                    )
                }
            }
            Domain::Complement(a) => a.at(level).clone(),
        }
    }

    pub fn cell_membership(&self, space: &SymbolicSpace, level: usize, cell: CellId) -> Membership {
        match self {
            Domain::Exact(s) => s.membership(space, level, cell),
            Domain::Complement(a) => {
                if a.at(level).cells.contains(&cell) {
                    Membership::Partial
                } else {
                    Membership::Inside
                }
            }
        }
    }
}

/// Image of a cell under a partial homeomorphism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellImage {
    /// `phi(C ∩ dom) = D ∩ ran` for a cell `D` of the same level.
    Resolved(CellId),
    /// A deeper prefix is needed.
    Unresolved,
    /// `C` does not meet the domain.
    Outside,
}

/// A partial homeomorphism presented cell by cell, level by level.
///
/// `point_forward` carries images of representative points of level-`D`
/// cells whose cell image is still unresolved at the finest level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialHomeo {
    domain: Domain,
    range: Domain,
    forward: Vec<Vec<CellImage>>,
    backward: Vec<Vec<CellImage>>,
    point_forward: BTreeMap<CellId, CellId>,
    point_backward: BTreeMap<CellId, CellId>,
}

impl PartialHomeo {
    pub fn new(
        space: &SymbolicSpace,
        domain: Domain,
        range: Domain,
        forward: Vec<Vec<CellImage>>,
        point_forward: BTreeMap<CellId, CellId>,
    ) -> Result<Self> {
        let d = space.depth();
        if forward.len() != d {
            return Err(Error::Invalid(format!(
                "cell tables for {} levels, space has {}",
                forward.len(),
                d
            )));
        }
        let mut backward = Vec::with_capacity(d);
        for (l0, row) in forward.iter().enumerate() {
            let l = l0 + 1;
            let n = space.cell_count(l);
            if row.len() != n {
                return Err(Error::Invalid(format!("level {l}: table has {} rows, expected {n}", row.len())));
            }
            let mut back = vec![CellImage::Unresolved; n];
            let mut seen = vec![false; n];
            for (c, img) in row.iter().enumerate() {
                if let CellImage::Resolved(t) = *img {
                    let t = t as usize;
                    if t >= n {
                        return Err(Error::Invalid(format!("level {l}: image {t} out of range")));
                    }
                    if seen[t] {
                        return Err(Error::Invalid(format!(
                            "level {l}: two cells resolve onto `{}`",
                            space.cell_name(l, t as CellId)
                        )));
                    }
                    seen[t] = true;
                    back[t] = CellImage::Resolved(c as CellId);
                }
            }
            for (t, b) in back.iter_mut().enumerate() {
                if !seen[t] && range.cell_membership(space, l, t as CellId) == Membership::Outside {
                    *b = CellImage::Outside;
                }
            }
            backward.push(back);
        }
        let mut point_backward = BTreeMap::new();
        for (&s, &t) in &point_forward {
            if point_backward.insert(t, s).is_some() {
                return Err(Error::Invalid(format!("two points map onto deep cell {t}")));
            }
        }
        Ok(PartialHomeo {
            domain,
            range,
            forward,
            backward,
            point_forward,
            point_backward,
        })
    }

    pub fn identity(space: &SymbolicSpace) -> PartialHomeo {
        let forward = (1..=space.depth())
            .map(|l| (0..space.cell_count(l) as CellId).map(CellImage::Resolved).collect())
            .collect();
        PartialHomeo::new(space, Domain::whole(space), Domain::whole(space), forward, BTreeMap::new())
            .expect("identity tables are consistent")
    }

    /// The empty partial map.
    pub fn empty(space: &SymbolicSpace) -> PartialHomeo {
        let forward = (1..=space.depth())
            .map(|l| vec![CellImage::Outside; space.cell_count(l)])
            .collect();
        let none = Domain::Exact(space.empty());
        PartialHomeo::new(space, none.clone(), none, forward, BTreeMap::new())
            .expect("empty tables are consistent")
    }

    pub fn inverse(&self) -> PartialHomeo {
        PartialHomeo {
            domain: self.range.clone(),
            range: self.domain.clone(),
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            point_forward: self.point_backward.clone(),
            point_backward: self.point_forward.clone(),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn range(&self) -> &Domain {
        &self.range
    }

    pub fn cell_image(&self, level: usize, cell: CellId) -> CellImage {
        self.forward[level - 1][cell as usize]
    }

    pub fn inverse_cell_image(&self, level: usize, cell: CellId) -> CellImage {
        self.backward[level - 1][cell as usize]
    }

    pub fn point_overrides(&self) -> &BTreeMap<CellId, CellId> {
        &self.point_forward
    }

    pub fn contains_deep(&self, space: &SymbolicSpace, cell: CellId) -> bool {
        self.domain.contains_deep(space, cell)
    }

    /// Image of the point at resolution `D` with level-`D` cell `cell`.
    pub fn map_deep(&self, space: &SymbolicSpace, cell: CellId) -> Result<CellId> {
        if !self.domain.contains_deep(space, cell) {
            return Err(Error::OutsideDomain);
        }
        match self.cell_image(space.depth(), cell) {
            CellImage::Resolved(t) => Ok(t),
            CellImage::Outside => Err(Error::OutsideDomain),
            CellImage::Unresolved => self
                .point_forward
                .get(&cell)
                .copied()
                .ok_or(Error::ResolutionExhausted { level: space.depth() }),
        }
    }

    /// `phi(x)`, with the prefix reported to `target_depth`.
    pub fn apply(&self, space: &SymbolicSpace, x: &Point, target_depth: usize) -> Result<Point> {
        if target_depth == 0 || target_depth > space.depth() {
            return Err(Error::ResolutionExhausted { level: target_depth });
        }
        let c = space.resolve(x)?;
        let img = self.map_deep(space, c)?;
        let mut prefix = space.chain(space.depth(), img);
        prefix.truncate(target_depth);
        Ok(Point {
            prefix,
            tail: x.tail,
        })
    }

    /// `phi(A \ X_max)` as a clopen set. Unresolved cells are split; a
    /// level-`D` cell inside the removed-set approximation whose image never
    /// resolves is dropped.
    pub fn image_clopen(&self, space: &SymbolicSpace, set: &ClopenSet) -> Result<ClopenSet> {
        let mut pieces: Vec<(usize, CellId)> = Vec::new();
        let mut stack: Vec<(usize, CellId)> = set.cells.iter().map(|&c| (set.level, c)).collect();
        let d = space.depth();
        while let Some((l, c)) = stack.pop() {
            match self.cell_image(l, c) {
                CellImage::Resolved(t) => pieces.push((l, t)),
                CellImage::Outside => {}
                CellImage::Unresolved => {
                    if l < d {
                        stack.extend(space.children(l, c).iter().map(|&ch| (l + 1, ch)));
                    } else if let Some(&t) = self.point_forward.get(&c) {
                        pieces.push((d, t));
                    } else if !self.domain.removed_at(space, d).cells.contains(&c) {
                        return Err(Error::ResolutionExhausted { level: d });
                    }
                }
            }
        }
        Ok(assemble(space, set.level, pieces))
    }

    /// Preimage `phi^{-1}(A)` of a set disjoint from the range's removed set.
    pub fn preimage_clopen(&self, space: &SymbolicSpace, set: &ClopenSet) -> Result<ClopenSet> {
        self.inverse().image_clopen(space, set)
    }

    /// Structural checks; each violation is a human-readable line.
    pub fn validate(&self, space: &SymbolicSpace) -> Vec<String> {
        let mut out = Vec::new();
        let d = space.depth();
        for (name, table) in [("forward", &self.forward), ("backward", &self.backward)] {
            for l in 1..d {
                for c in 0..space.cell_count(l) as CellId {
                    if let CellImage::Resolved(t) = table[l - 1][c as usize] {
                        for &ch in space.children(l, c) {
                            match table[l][ch as usize] {
                                CellImage::Resolved(u) if space.parent(l + 1, u) == t => {}
                                other => out.push(format!(
                                    "{name}: level {l} cell `{}` resolves but child `{}` maps to {:?}",
                                    space.cell_name(l, c),
                                    space.cell_name(l + 1, ch),
                                    other
                                )),
                            }
                        }
                    }
                }
            }
        }
        for l in 1..=d {
            for c in 0..space.cell_count(l) as CellId {
                if self.cell_image(l, c) == CellImage::Outside
                    && self.domain.cell_membership(space, l, c) != Membership::Outside
                {
                    out.push(format!(
                        "level {l} cell `{}` marked OUTSIDE but meets the domain",
                        space.cell_name(l, c)
                    ));
                }
            }
        }
        out
    }

    /// Composite `other ∘ self` at every level. Domains are tracked through
    /// the deep-cell semantics; cell tables compose where both resolve.
    pub fn then(&self, other: &PartialHomeo, space: &SymbolicSpace) -> PartialHomeo {
        let d = space.depth();
        let mut forward = Vec::with_capacity(d);
        for l in 1..=d {
            let row = (0..space.cell_count(l) as CellId)
                .map(|c| match self.cell_image(l, c) {
                    CellImage::Resolved(t) => match other.cell_image(l, t) {
                        CellImage::Resolved(u) => CellImage::Resolved(u),
                        CellImage::Outside => CellImage::Outside,
                        CellImage::Unresolved => CellImage::Unresolved,
                    },
                    x => x,
                })
                .collect::<Vec<_>>();
            forward.push(row);
        }
        let mut removed = Vec::new();
        let mut points = BTreeMap::new();
        let mut images = Vec::new();
        for c in 0..space.cell_count(d) as CellId {
            match self.map_deep(space, c).and_then(|t| other.map_deep(space, t)) {
                Ok(u) => {
                    images.push(u);
                    if !matches!(forward[d - 1][c as usize], CellImage::Resolved(_)) {
                        points.insert(c, u);
                    }
                }
                Err(_) => removed.push(c),
            }
        }
        // cells that resolve but whose deep points all fall outside become OUTSIDE
        let dom = Domain::Complement(ClosedApprox::from_deep_cells(space, removed.iter().copied()));
        let image_set: BTreeSet<CellId> = images.into_iter().collect();
        let ran_removed = (0..space.cell_count(d) as CellId).filter(|c| !image_set.contains(c));
        let ran = Domain::Complement(ClosedApprox::from_deep_cells(space, ran_removed));
        for l in 1..=d {
            for c in 0..space.cell_count(l) as CellId {
                let deep = space.descendants(l, c, d);
                if deep.iter().all(|x| removed.binary_search(x).is_ok()) {
                    forward[l - 1][c as usize] = CellImage::Outside;
                }
            }
        }
        PartialHomeo::new(space, dom, ran, forward, points).expect("composite of consistent maps")
    }
}

fn assemble(space: &SymbolicSpace, base_level: usize, pieces: Vec<(usize, CellId)>) -> ClopenSet {
    let level = pieces.iter().map(|p| p.0).max().unwrap_or(base_level).max(base_level);
    let mut cells = BTreeSet::new();
    for (l, c) in pieces {
        cells.extend(space.descendants(l, c, level));
    }
    ClopenSet { level, cells }
}

/// `Z = phi^{-1}(Y) ∪ X_max`, computed through its complement
/// `X \ Z = phi^{-1}(X \ Y)`; requires `Y ⊇ X_min`.
pub fn pullback_union_max(space: &SymbolicSpace, phi: &PartialHomeo, y: &ClopenSet) -> Result<ClopenSet> {
    let outside = y.complement(space);
    let pre = phi.preimage_clopen(space, &outside)?;
    Ok(pre.complement(space).canonical(space))
}

/// Builds a space whose level-`n` cells are the binary words of length `n`.
///
/// Cell index `i` at level `n` is the little-endian value of the word, so the
/// odometer acts as `i -> i + 1 mod 2^n`. Tail rules `zero` and `one` append
/// the constant symbol.
pub fn binary_space(depth: usize) -> SymbolicSpace {
    let mut names = Vec::with_capacity(depth);
    let mut parents = Vec::with_capacity(depth);
    for l in 1..=depth {
        let n = 1usize << l;
        names.push((0..n).map(|i| binary_word(i as CellId, l)).collect());
        parents.push((0..n).map(|i| (i % (n / 2).max(1)) as CellId).collect());
    }
    let zero = (1..depth)
        .map(|l| (0..1u32 << l).map(Some).collect())
        .collect();
    let one = (1..depth)
        .map(|l| (0..1u32 << l).map(|i| Some(i + (1 << l))).collect())
        .collect();
    SymbolicSpace::new(
        names,
        parents,
        vec![TailRule::new("zero", zero), TailRule::new("one", one)],
    )
    .expect("binary space is well formed")
}

/// Word `w_1 … w_n` of the little-endian index.
pub fn binary_word(index: CellId, len: usize) -> String {
    (0..len)
        .map(|b| if index >> b & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn odometer(space: &SymbolicSpace) -> PartialHomeo {
        let forward = (1..=space.depth())
            .map(|l| {
                let n = 1u32 << l;
                (0..n).map(|i| CellImage::Resolved((i + 1) % n)).collect()
            })
            .collect();
        PartialHomeo::new(space, Domain::whole(space), Domain::whole(space), forward, BTreeMap::new()).unwrap()
    }

    #[test]
    fn rejects_empty_space() {
        assert!(SymbolicSpace::new(vec![vec![]], vec![vec![]], vec![]).is_err());
        assert!(SymbolicSpace::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn binary_words_and_parents() {
        let s = binary_space(3);
        assert_eq!(s.cell_name(3, 1), "100");
        assert_eq!(s.cell_name(3, 6), "011");
        assert_eq!(s.parent(3, 6), 2);
        assert_eq!(s.cell_name(2, 2), "01");
        assert_eq!(s.children(1, 1), &[1, 3]);
    }

    #[test]
    fn apply_increment_with_carry() {
        let s = binary_space(6);
        let phi = odometer(&s);
        let zeros = s.point_by_names(&["0"], "zero").unwrap();
        let img = phi.apply(&s, &zeros, 3).unwrap();
        let names: Vec<_> = img.prefix.iter().enumerate().map(|(i, &c)| s.cell_name(i + 1, c)).collect();
        assert_eq!(names, vec!["1", "10", "100"]);
        let x = s.point_by_names(&["1", "11", "110"], "zero").unwrap();
        let y = phi.apply(&s, &x, 6).unwrap();
        assert_eq!(s.cell_name(6, y.prefix[5]), "001000");
    }

    #[test]
    fn identity_fixes_points() {
        let s = binary_space(4);
        let id = PartialHomeo::identity(&s);
        let x = s.point_by_names(&["1", "10"], "one").unwrap();
        let y = id.apply(&s, &x, 4).unwrap();
        assert_eq!(s.resolve(&y).unwrap(), s.resolve(&x).unwrap());
    }

    #[test]
    fn canonical_merges_siblings() {
        let s = binary_space(4);
        let a = ClopenSet::new(1, [0]).lift(&s, 4);
        assert_eq!(a.len(), 8);
        assert_eq!(a.canonical(&s), ClopenSet::new(1, [0]));
        let b = ClopenSet::new(2, [0, 1]);
        assert_eq!(b.canonical(&s), ClopenSet::new(2, [0, 1]));
        assert!(ClopenSet::new(3, []).canonical(&s).is_empty());
    }

    #[test]
    fn image_and_pullback_on_odometer() {
        let s = binary_space(4);
        let phi = odometer(&s);
        let img = phi.image_clopen(&s, &ClopenSet::new(1, [0])).unwrap();
        assert!(img.same_set(&ClopenSet::new(1, [1]), &s));
        assert!(phi.image_clopen(&s, &s.empty()).unwrap().is_empty());
        let z = pullback_union_max(&s, &phi, &ClopenSet::new(1, [0])).unwrap();
        assert_eq!(z, ClopenSet::new(1, [1]));
        let z = pullback_union_max(&s, &phi, &s.full(1)).unwrap();
        assert!(z.is_full(&s));
    }

    #[test]
    fn odometer_tables_validate() {
        let s = binary_space(5);
        assert!(odometer(&s).validate(&s).is_empty());
        assert!(odometer(&s).inverse().validate(&s).is_empty());
    }

    #[test]
    fn rejects_non_injective_table() {
        let s = binary_space(1);
        let t = vec![vec![CellImage::Resolved(0), CellImage::Resolved(0)]];
        assert!(PartialHomeo::new(&s, Domain::whole(&s), Domain::whole(&s), t, BTreeMap::new()).is_err());
    }

    #[test]
    fn composite_of_odometer_is_double_step() {
        let s = binary_space(4);
        let phi = odometer(&s);
        let two = phi.then(&phi, &s);
        assert_eq!(two.cell_image(3, 7), CellImage::Resolved(1));
        assert_eq!(two.map_deep(&s, 15).unwrap(), 1);
    }
}
