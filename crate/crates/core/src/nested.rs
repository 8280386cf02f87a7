//! Nested sequences of partial homeomorphisms: validation, the Φ-map,
//! AF criteria, counting-cocycle continuity and semi-saturation.
//!
//! Points are identified with their deepest-level cells, as everywhere in
//! the crate. A deep cell whose image under a map leaves the materialized
//! resolution is treated as unknown rather than as outside the domain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pds::BratteliSystem;
use crate::space::{CellId, CellImage, ClopenSet, Domain, Membership, PartialHomeo, Point, SymbolicSpace};
use crate::versik::CocycleValue;

/// How `phi_n` is obtained outside the stored window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BeyondRule {
    /// `dom phi_n` is empty.
    Empty,
    /// `phi_n = phi_1^n`.
    PowerOfPhi1,
    /// `phi_{2k} = phi_2^k` and `phi_{2k-1} = phi_1^{2k-1}`.
    ParityPowers,
    /// Not materialized; checks only quantify over the window.
    Truncated,
}

impl BeyondRule {
    pub fn name(&self) -> &'static str {
        match self {
            BeyondRule::Empty => "empty",
            BeyondRule::PowerOfPhi1 => "power",
            BeyondRule::ParityPowers => "parity",
            BeyondRule::Truncated => "truncated",
        }
    }

    pub fn parse(s: &str) -> Result<BeyondRule> {
        match s {
            "empty" => Ok(BeyondRule::Empty),
            "power" => Ok(BeyondRule::PowerOfPhi1),
            "parity" => Ok(BeyondRule::ParityPowers),
            "truncated" => Ok(BeyondRule::Truncated),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

/// Image of a deep cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Deep {
    Outside,
    Unknown,
    Image(CellId),
}

pub(crate) fn deep(space: &SymbolicSpace, phi: &PartialHomeo, c: CellId) -> Deep {
    match phi.map_deep(space, c) {
        Ok(t) => Deep::Image(t),
        Err(Error::ResolutionExhausted { .. }) => Deep::Unknown,
        Err(_) => Deep::Outside,
    }
}

/// `{phi_n}` for `n` in `[-M, M]` plus a rule for larger `|n|`.
#[derive(Clone, Debug)]
pub struct NestedSequence {
    pub space: SymbolicSpace,
    pub maps: BTreeMap<i32, PartialHomeo>,
    pub beyond: BeyondRule,
}

impl NestedSequence {
    /// Builds the sequence from `phi_1..phi_M`; `phi_0` is the identity and
    /// `phi_{-n}` the inverse of `phi_n`.
    pub fn from_positive(space: SymbolicSpace, positive: Vec<PartialHomeo>, beyond: BeyondRule) -> NestedSequence {
        let mut maps = BTreeMap::new();
        maps.insert(0, PartialHomeo::identity(&space));
        for (i, phi) in positive.into_iter().enumerate() {
            let n = i as i32 + 1;
            maps.insert(-n, phi.inverse());
            maps.insert(n, phi);
        }
        NestedSequence { space, maps, beyond }
    }

    pub fn window(&self) -> i32 {
        self.maps.keys().map(|n| n.abs()).max().unwrap_or(0)
    }

    pub fn get(&self, n: i32) -> Option<&PartialHomeo> {
        self.maps.get(&n)
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    fn deep_count(&self) -> usize {
        self.space.cell_count(self.depth())
    }

    /// The sequence with its window widened to `reach` by the beyond rule.
    /// Truncated and empty rules leave the window unchanged.
    pub fn extended(&self, reach: i32) -> NestedSequence {
        let mut out = self.clone();
        let s = &self.space;
        let w = self.window();
        for n in w + 1..=reach {
            let phi = match self.beyond {
                BeyondRule::PowerOfPhi1 => out.maps[&(n - 1)].then(&self.maps[&1], s),
                BeyondRule::ParityPowers if n % 2 == 0 && self.maps.contains_key(&2) => {
                    out.maps[&(n - 2)].then(&self.maps[&2], s)
                }
                BeyondRule::ParityPowers => out.maps[&(n - 1)].then(&self.maps[&1], s),
                _ => return out,
            };
            out.maps.insert(-n, phi.inverse());
            out.maps.insert(n, phi);
        }
        out
    }

    /// Deep cells outside `dom phi_n`.
    pub fn removed_deep(&self, n: i32) -> BTreeSet<CellId> {
        let phi = &self.maps[&n];
        (0..self.deep_count() as CellId)
            .filter(|&c| !phi.contains_deep(&self.space, c))
            .collect()
    }

    fn extreme_deep(&self, sign: i32) -> BTreeSet<CellId> {
        let w = self.window();
        (0..self.deep_count() as CellId)
            .filter(|&c| (1..=w).all(|n| !self.maps[&(sign * n)].contains_deep(&self.space, c)))
            .collect()
    }

    /// `X_max = ∩_{n >= 1} (X \ dom phi_n)` at resolution.
    pub fn xmax_deep(&self) -> BTreeSet<CellId> {
        self.extreme_deep(1)
    }

    /// `X_min = ∩_{n >= 1} (X \ dom phi_{-n})` at resolution.
    pub fn xmin_deep(&self) -> BTreeSet<CellId> {
        self.extreme_deep(-1)
    }

    /// Approximation of `X_max` at `level`.
    pub fn xmax(&self, level: usize) -> ClopenSet {
        self.project(&self.xmax_deep(), level)
    }

    pub fn xmin(&self, level: usize) -> ClopenSet {
        self.project(&self.xmin_deep(), level)
    }

    fn project(&self, deep: &BTreeSet<CellId>, level: usize) -> ClopenSet {
        let d = self.depth();
        ClopenSet::new(level, deep.iter().map(|&c| self.space.ancestor(d, c, level)))
    }
}

/// A failed invariant of a nested sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NestViolation {
    pub n: i32,
    pub m: i32,
    pub level: usize,
    pub cell: String,
    pub detail: String,
}

/// Checks `phi_0 = id`, `phi_{-n} = phi_n^{-1}` and
/// `Γ(phi_n ∘ phi_m) ⊆ Γ(phi_{n+m})` inside the window.
pub fn validate_nested(nest: &NestedSequence) -> Vec<NestViolation> {
    let s = &nest.space;
    let d = s.depth();
    let deep_n = s.cell_count(d) as CellId;
    let mut out = Vec::new();
    let mut push = |n: i32, m: i32, level: usize, cell: CellId, detail: String| {
        out.push(NestViolation {
            n,
            m,
            level,
            cell: s.cell_name(level, cell).to_string(),
            detail,
        })
    };
    match nest.get(0) {
        None => push(0, 0, 1, 0, "phi_0 is missing".into()),
        Some(id) => {
            for c in 0..deep_n {
                if deep(s, id, c) != Deep::Image(c) {
                    push(0, 0, d, c, "phi_0 is not the identity".into());
                }
            }
        }
    }
    let w = nest.window();
    for n in 1..=w {
        let (Some(f), Some(b)) = (nest.get(n), nest.get(-n)) else {
            push(n, -n, 1, 0, format!("phi_{n} or phi_-{n} is missing"));
            continue;
        };
        for c in 0..deep_n {
            match deep(s, f, c) {
                Deep::Image(t) => match deep(s, b, t) {
                    Deep::Image(u) if u == c => {}
                    Deep::Unknown => {}
                    _ => push(n, -n, d, c, format!("phi_-{n} does not invert phi_{n}")),
                },
                Deep::Outside => {
                    if let Some(x) = (0..deep_n).find(|&t| deep(s, b, t) == Deep::Image(c)) {
                        push(n, -n, d, x, format!("phi_-{n} maps onto a point outside dom phi_{n}"));
                    }
                }
                Deep::Unknown => {}
            }
        }
    }
    for n in -w..=w {
        for m in -w..=w {
            let k = n + m;
            if k.abs() > w {
                continue;
            }
            let (pn, pm, pk) = (&nest.maps[&n], &nest.maps[&m], &nest.maps[&k]);
            for c in 0..deep_n {
                let Deep::Image(t) = deep(s, pm, c) else { continue };
                let Deep::Image(u) = deep(s, pn, t) else { continue };
                match deep(s, pk, c) {
                    Deep::Image(v) if v == u => {}
                    Deep::Unknown => {}
                    other => push(n, m, d, c, format!("composite sends it to {u}, phi_{k} gives {other:?}")),
                }
            }
            for l in 1..d {
                for c in 0..s.cell_count(l) as CellId {
                    let CellImage::Resolved(t) = pm.cell_image(l, c) else { continue };
                    let CellImage::Resolved(u) = pn.cell_image(l, t) else { continue };
                    if let CellImage::Resolved(v) = pk.cell_image(l, c) {
                        if v != u {
                            push(n, m, l, c, format!("composite cell image differs from phi_{k}"));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Φ on one deep cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PhiEntry {
    /// In no domain: the cell lies in `X_max`.
    Terminal,
    /// `Φ(x) = phi_k(x)`.
    Step { k: i32, image: CellId },
    /// In `dom phi_k` but the image leaves the resolution.
    Unknown { k: i32 },
}

/// Φ and Φ^{-1} tabulated on deep cells, with the minimal `k` of each step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhiMap {
    pub forward: Vec<PhiEntry>,
    pub backward: Vec<PhiEntry>,
}

fn phi_table(nest: &NestedSequence, sign: i32) -> Vec<PhiEntry> {
    let s = &nest.space;
    let w = nest.window();
    (0..s.cell_count(s.depth()) as CellId)
        .map(|c| {
            for k in 1..=w {
                match deep(s, &nest.maps[&(sign * k)], c) {
                    Deep::Outside => continue,
                    Deep::Image(t) => return PhiEntry::Step { k, image: t },
                    Deep::Unknown => return PhiEntry::Unknown { k },
                }
            }
            PhiEntry::Terminal
        })
        .collect()
}

impl PhiMap {
    pub fn new(nest: &NestedSequence) -> PhiMap {
        PhiMap {
            forward: phi_table(nest, 1),
            backward: phi_table(nest, -1),
        }
    }

    pub fn step(&self, c: CellId) -> Result<CellId> {
        match self.forward[c as usize] {
            PhiEntry::Step { image, .. } => Ok(image),
            PhiEntry::Terminal => Err(Error::MaximalPoint),
            PhiEntry::Unknown { .. } => Err(Error::ResolutionExhausted { level: usize::MAX }),
        }
    }

    pub fn step_back(&self, c: CellId) -> Result<CellId> {
        match self.backward[c as usize] {
            PhiEntry::Step { image, .. } => Ok(image),
            PhiEntry::Terminal => Err(Error::MinimalPoint),
            PhiEntry::Unknown { .. } => Err(Error::ResolutionExhausted { level: usize::MAX }),
        }
    }

    /// Cells where Φ and the inverse table disagree.
    pub fn bijectivity_defects(&self) -> Vec<CellId> {
        let mut bad = Vec::new();
        for (c, e) in self.forward.iter().enumerate() {
            if let PhiEntry::Step { image, .. } = *e {
                match self.backward[image as usize] {
                    PhiEntry::Step { image: back, .. } if back as usize == c => {}
                    PhiEntry::Unknown { .. } => {}
                    _ => bad.push(c as CellId),
                }
            }
        }
        bad
    }
}

/// `Φ(x)` together with the minimal `k`.
pub fn phi(nest: &NestedSequence, x: &Point, depth: usize) -> Result<(i32, Point)> {
    let s = &nest.space;
    let c = s.resolve(x)?;
    for k in 1..=nest.window() {
        match deep(s, &nest.maps[&k], c) {
            Deep::Outside => continue,
            Deep::Unknown => return Err(Error::ResolutionExhausted { level: s.depth() }),
            Deep::Image(_) => return Ok((k, nest.maps[&k].apply(s, x, depth)?)),
        }
    }
    Err(Error::MaximalPoint)
}

/// Signed number of Φ-steps from deep cell `x` to `y`, searched up to
/// `bound` steps in each direction.
pub fn counting_cocycle_cells(map: &PhiMap, x: CellId, y: CellId, bound: usize) -> Result<CocycleValue> {
    if x == y {
        return Ok(CocycleValue::Value(0));
    }
    for (sign, back) in [(1i128, false), (-1i128, true)] {
        let mut c = x;
        for n in 1..=bound {
            let next = if back { map.step_back(c) } else { map.step(c) };
            match next {
                Ok(t) => c = t,
                Err(Error::ResolutionExhausted { .. }) => return Err(Error::ResolutionExhausted { level: n }),
                Err(_) => break,
            }
            if c == y {
                return Ok(CocycleValue::Value(sign * n as i128));
            }
        }
    }
    Ok(CocycleValue::NotCofinal)
}

/// `d̂(x, y)` on points, searching `2^depth` steps.
pub fn counting_cocycle_nested(nest: &NestedSequence, x: &Point, y: &Point, depth: usize) -> Result<CocycleValue> {
    let s = &nest.space;
    let map = PhiMap::new(nest);
    let bound = 1usize << depth.min(s.depth()).min(30);
    counting_cocycle_cells(&map, s.resolve(x)?, s.resolve(y)?, bound)
}

/// Level at which a set of deep cells is an exact union of coarser cells,
/// or `None` if it needs the deepest level.
fn clopen_level(space: &SymbolicSpace, deep: &BTreeSet<CellId>) -> Option<usize> {
    let d = space.depth();
    if deep.is_empty() {
        return Some(1);
    }
    let c = ClopenSet::new(d, deep.iter().copied()).canonical(space);
    (c.level < d).then_some(c.level)
}

fn domain_deep(nest: &NestedSequence, n: i32) -> BTreeSet<CellId> {
    let s = &nest.space;
    let phi = &nest.maps[&n];
    (0..s.cell_count(s.depth()) as CellId)
        .filter(|&c| deep(s, phi, c) != Deep::Outside)
        .collect()
}

/// Outcome of the three hypotheses of the Φ lemma.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum LemmaVerdict {
    /// All hold; `dom phi_n` is empty for `|n| >= m`.
    Satisfied { m: i32 },
    /// Each entry starts with the number of the failed condition.
    Violations(Vec<(u8, String)>),
}

/// Checks that `X_max`, `X_min` and every `dom phi_n` are clopen and that
/// the domains vanish beyond some `M`.
pub fn check_lemma_conditions(nest: &NestedSequence) -> LemmaVerdict {
    let s = &nest.space;
    let mut bad = Vec::new();
    if clopen_level(s, &nest.xmax_deep()).is_none() {
        bad.push((1, "X_max is not clopen at any materialized level".to_string()));
    }
    if clopen_level(s, &nest.xmin_deep()).is_none() {
        bad.push((1, "X_min is not clopen at any materialized level".to_string()));
    }
    let w = nest.window();
    let mut nonempty = 0;
    for n in 1..=w {
        for k in [n, -n] {
            let dom = domain_deep(nest, k);
            if clopen_level(s, &dom).is_none() {
                bad.push((2, format!("dom phi_{k} is not clopen")));
            }
            if !dom.is_empty() {
                nonempty = nonempty.max(n);
            }
        }
    }
    let m = nonempty + 1;
    let vanishes = match nest.beyond {
        BeyondRule::Empty => true,
        BeyondRule::PowerOfPhi1 | BeyondRule::ParityPowers | BeyondRule::Truncated => m <= w,
    };
    if !vanishes {
        bad.push((3, format!("dom phi_{w} is not empty; no M within the window")));
    }
    if bad.is_empty() {
        LemmaVerdict::Satisfied { m }
    } else {
        LemmaVerdict::Violations(bad)
    }
}

/// Restriction of `phi_n` to `D_n`, the union of level-`k` cells `C`
/// inside `dom phi_n` with `C ∩ Z = ∅`, `phi_n(C)` a level-`k` cell and
/// `phi_n(C) ∩ Y = ∅`.
fn restrict(nest: &NestedSequence, n: i32, k: usize, y: &ClopenSet, z: &ClopenSet) -> PartialHomeo {
    let s = &nest.space;
    let d = s.depth();
    let phi = &nest.maps[&n];
    let y = y.lift(s, k);
    let z = z.lift(s, k);
    let mut dom = BTreeSet::new();
    let mut ran = BTreeSet::new();
    for c in 0..s.cell_count(k) as CellId {
        if phi.domain().cell_membership(s, k, c) != Membership::Inside || z.cells.contains(&c) {
            continue;
        }
        if let CellImage::Resolved(t) = phi.cell_image(k, c) {
            if !y.cells.contains(&t) && s.descendants(k, c, d).iter().all(|&q| matches!(deep(s, phi, q), Deep::Image(_))) {
                dom.insert(c);
                ran.insert(t);
            }
        }
    }
    let forward = (1..=d)
        .map(|l| {
            (0..s.cell_count(l) as CellId)
                .map(|c| {
                    let inside = if l >= k {
                        let a = s.ancestor(l, c, k);
                        if dom.contains(&a) {
                            Membership::Inside
                        } else {
                            Membership::Outside
                        }
                    } else {
                        let desc = s.descendants(l, c, k);
                        let hit = desc.iter().filter(|q| dom.contains(q)).count();
                        match hit {
                            0 => Membership::Outside,
                            h if h == desc.len() => Membership::Inside,
                            _ => Membership::Partial,
                        }
                    };
                    match inside {
                        Membership::Outside => CellImage::Outside,
                        Membership::Partial => CellImage::Unresolved,
                        Membership::Inside => match phi.cell_image(l, c) {
                            CellImage::Resolved(t) => CellImage::Resolved(t),
                            _ => CellImage::Unresolved,
                        },
                    }
                })
                .collect()
        })
        .collect();
    PartialHomeo::new(
        s,
        Domain::Exact(ClopenSet::new(k, dom)),
        Domain::Exact(ClopenSet::new(k, ran)),
        forward,
        BTreeMap::new(),
    )
    .expect("restriction of a consistent map")
}

/// Lengths of the maximal Φ-orbits (chains from `X_min` to `X_max`), sorted,
/// and the number of cells on cycles.
pub fn phi_towers(map: &PhiMap) -> (Vec<usize>, usize) {
    let n = map.forward.len();
    let mut seen = vec![false; n];
    let mut heights = Vec::new();
    for start in 0..n {
        if !matches!(map.backward[start], PhiEntry::Terminal) {
            continue;
        }
        let mut c = start;
        let mut h = 0;
        loop {
            if seen[c] {
                break;
            }
            seen[c] = true;
            h += 1;
            match map.forward[c] {
                PhiEntry::Step { image, .. } => c = image as usize,
                _ => break,
            }
        }
        heights.push(h);
    }
    heights.sort_unstable();
    (heights, seen.iter().filter(|x| !**x).count())
}

/// A successful AF certificate.
#[derive(Clone, Debug)]
pub struct AfnestWitness {
    pub level: usize,
    pub y: ClopenSet,
    pub z: ClopenSet,
    pub m: i32,
    /// Φ-tower heights of the restriction.
    pub towers: Vec<usize>,
    pub restricted: NestedSequence,
}

#[derive(Clone, Debug)]
pub enum AfnestVerdict {
    Found(Box<AfnestWitness>),
    NotFound { depth: usize },
}

impl AfnestVerdict {
    pub fn is_found(&self) -> bool {
        matches!(self, AfnestVerdict::Found(_))
    }
}

/// Φ of the restriction is a cell-level bijection at `level`, every cell
/// reaches `X_max` within `m - 1` steps, and there are no cycles.
fn restricted_phi_ok(r: &NestedSequence, level: usize, m: i32) -> Option<Vec<usize>> {
    let s = &r.space;
    let d = s.depth();
    let map = PhiMap::new(r);
    if !map.bijectivity_defects().is_empty() {
        return None;
    }
    if map.forward.iter().chain(&map.backward).any(|e| matches!(e, PhiEntry::Unknown { .. })) {
        return None;
    }
    for c in 0..s.cell_count(level) as CellId {
        let desc = s.descendants(level, c, d);
        let first = map.forward[desc[0] as usize];
        let image_cell = |e: PhiEntry| match e {
            PhiEntry::Step { k, image } => Some((k, s.ancestor(d, image, level))),
            _ => None,
        };
        if desc.iter().any(|&q| image_cell(map.forward[q as usize]) != image_cell(first)) {
            return None;
        }
    }
    let project = |table: &[PhiEntry]| -> Vec<PhiEntry> {
        (0..s.cell_count(level) as CellId)
            .map(|c| match table[s.descendants(level, c, d)[0] as usize] {
                PhiEntry::Step { k, image } => PhiEntry::Step { k, image: s.ancestor(d, image, level) },
                e => e,
            })
            .collect()
    };
    let cells = PhiMap {
        forward: project(&map.forward),
        backward: project(&map.backward),
    };
    let (towers, cyclic) = phi_towers(&cells);
    if cyclic > 0 || towers.iter().any(|&h| h as i32 > m) {
        return None;
    }
    Some(towers)
}

/// Searches `X_min ⊆ Y ⊆ U`, `X_max ⊆ Z ⊆ V` among unions of cells of
/// levels `1..=search_depth`, smallest candidates first, such that the
/// restricted sequence satisfies the Φ lemma.
pub fn check_afnest(nest: &NestedSequence, u: &ClopenSet, v: &ClopenSet, search_depth: usize) -> Result<AfnestVerdict> {
    let s = &nest.space;
    let d = s.depth();
    if !nest.xmin(u.level).is_subset(u, s) {
        return Err(Error::Invalid("U does not contain the X_min approximation".into()));
    }
    if !nest.xmax(v.level).is_subset(v, s) {
        return Err(Error::Invalid("V does not contain the X_max approximation".into()));
    }
    let top = search_depth.min(d.saturating_sub(1)).max(1);
    for k in 1..=top {
        let y = nest.xmin(k);
        let z = nest.xmax(k);
        if !y.is_subset(u, s) || !z.is_subset(v, s) {
            continue;
        }
        let positive: Vec<PartialHomeo> = (1..=nest.window()).map(|n| restrict(nest, n, k, &y, &z)).collect();
        let restricted = NestedSequence::from_positive(s.clone(), positive, BeyondRule::Empty);
        let LemmaVerdict::Satisfied { m } = check_lemma_conditions(&restricted) else {
            continue;
        };
        if m > nest.window() && nest.beyond != BeyondRule::Empty {
            continue;
        }
        if let Some(towers) = restricted_phi_ok(&restricted, k, m) {
            return Ok(AfnestVerdict::Found(Box::new(AfnestWitness {
                level: k,
                y,
                z,
                m,
                towers,
                restricted,
            })));
        }
    }
    Ok(AfnestVerdict::NotFound { depth: top })
}

/// Two points in one cell on which `d̂(x, phi_n x)` differs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscontinuityWitness {
    pub n: i32,
    pub level: usize,
    pub cell: String,
    pub first: String,
    pub first_value: i128,
    pub second: String,
    pub second_value: i128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContinuityVerdict {
    ContinuousUpTo(usize),
    /// Every witness found, ordered by `n` and then by cell.
    Discontinuity(Vec<DiscontinuityWitness>),
}

fn step_count(map: &PhiMap, x: CellId, y: CellId, n: i32) -> Option<i128> {
    match counting_cocycle_cells(map, x, y, n.unsigned_abs() as usize) {
        Ok(CocycleValue::Value(v)) => Some(v),
        _ => None,
    }
}

/// Looks for a cell of level `min(depth, D) - 1` and an `n` such that
/// `d̂(x, phi_n x)` takes two values on the points of the cell.
pub fn continuity_diagnostic(nest: &NestedSequence, depth: usize) -> ContinuityVerdict {
    let s = &nest.space;
    let d = s.depth();
    let r = depth.clamp(2, d);
    let level = r - 1;
    let map = PhiMap::new(nest);
    let mut found = Vec::new();
    for n in 1..=nest.window() {
        let phi_n = &nest.maps[&n];
        for c in 0..s.cell_count(level) as CellId {
            let mut first: Option<(CellId, i128)> = None;
            for q in s.descendants(level, c, d) {
                let Deep::Image(t) = deep(s, phi_n, q) else { continue };
                let Some(v) = step_count(&map, q, t, n) else { continue };
                match first {
                    None => first = Some((q, v)),
                    Some((p, pv)) if pv != v => {
                        found.push(DiscontinuityWitness {
                            n,
                            level,
                            cell: s.cell_name(level, c).to_string(),
                            first: s.cell_name(d, p).to_string(),
                            first_value: pv,
                            second: s.cell_name(d, q).to_string(),
                            second_value: v,
                        });
                        break;
                    }
                    Some(_) => {}
                }
            }
        }
    }
    if found.is_empty() {
        ContinuityVerdict::ContinuousUpTo(r)
    } else {
        ContinuityVerdict::Discontinuity(found)
    }
}

/// Recomputes both cocycle values of a witness from its two points.
pub fn replay_discontinuity(nest: &NestedSequence, w: &DiscontinuityWitness) -> bool {
    let s = &nest.space;
    let d = s.depth();
    let Some(phi_n) = nest.get(w.n) else { return false };
    let map = PhiMap::new(nest);
    let value = |name: &str| {
        let c = s.cell_by_name(d, name)?;
        let Deep::Image(t) = deep(s, phi_n, c) else { return None };
        step_count(&map, c, t, w.n)
    };
    let same_cell = match (s.cell_by_name(d, &w.first), s.cell_by_name(d, &w.second)) {
        (Some(a), Some(b)) => {
            s.cell_name(w.level, s.ancestor(d, a, w.level)) == w.cell
                && s.cell_name(w.level, s.ancestor(d, b, w.level)) == w.cell
        }
        _ => false,
    };
    same_cell && value(&w.first) == Some(w.first_value) && value(&w.second) == Some(w.second_value) && w.first_value != w.second_value
}

/// Which side of the semi-saturation criterion a row refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Sequences in `dom phi_1`, mapped by `phi_1`.
    Forward,
    /// Sequences in `range phi_1`, mapped by `phi_1^{-1}`.
    Backward,
}

/// Two points close to `point` whose images stay apart.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemisatWitness {
    pub side: Side,
    pub point: String,
    pub level: usize,
    pub separation_level: usize,
    pub first: String,
    pub first_image: String,
    pub first_image_cell: String,
    pub second: String,
    pub second_image: String,
    pub second_image_cell: String,
}

/// Where the extension sends a point outside `dom phi_1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtensionEntry {
    pub side: Side,
    pub point: String,
    pub level: usize,
    pub image_cell: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SemisatVerdict {
    Admits(Vec<ExtensionEntry>),
    FailsWithWitness(Box<SemisatWitness>),
    UnknownUpTo(usize),
}

enum Limit {
    Contracts(ExtensionEntry),
    Separates(Box<SemisatWitness>),
    Unclear,
}

fn limit_at(nest: &NestedSequence, side: Side, p: CellId, r: usize) -> Limit {
    let s = &nest.space;
    let d = s.depth();
    let phi1 = &nest.maps[&if side == Side::Forward { 1 } else { -1 }];
    let images_at = |l: usize| -> Vec<(CellId, CellId)> {
        s.descendants(l, s.ancestor(d, p, l), d)
            .into_iter()
            .filter(|&q| q != p)
            .filter_map(|q| match deep(s, phi1, q) {
                Deep::Image(t) => Some((q, t)),
                _ => None,
            })
            .collect()
    };
    let Some((l, imgs)) = (1..r).rev().map(|l| (l, images_at(l))).find(|(_, v)| v.len() >= 2) else {
        return Limit::Unclear;
    };
    let sep = (1..=d).find(|&lv| {
        let a = s.ancestor(d, imgs[0].1, lv);
        imgs.iter().any(|&(_, t)| s.ancestor(d, t, lv) != a)
    });
    match sep {
        Some(sep) if sep <= l / 2 => {
            let a = s.ancestor(d, imgs[0].1, sep);
            let other = imgs.iter().find(|&&(_, t)| s.ancestor(d, t, sep) != a).expect("separated images");
            let name = |lv: usize, c: CellId| s.cell_name(lv, c).to_string();
            Limit::Separates(Box::new(SemisatWitness {
                side,
                point: name(d, p),
                level: l,
                separation_level: sep,
                first: name(d, imgs[0].0),
                first_image: name(d, imgs[0].1),
                first_image_cell: name(sep, a),
                second: name(d, other.0),
                second_image: name(d, other.1),
                second_image_cell: name(sep, s.ancestor(d, other.1, sep)),
            }))
        }
        Some(sep) if sep > l => Limit::Contracts(ExtensionEntry {
            side,
            point: s.cell_name(d, p).to_string(),
            level: sep - 1,
            image_cell: s.cell_name(sep - 1, s.ancestor(d, imgs[0].1, sep - 1)).to_string(),
        }),
        _ => Limit::Unclear,
    }
}

/// Cell-level test of whether `phi_1` extends to a homeomorphism whose
/// powers restrict to every `phi_n`.
///
/// For every point of `∪ dom phi_n` outside `dom phi_1` the `phi_1`-images
/// of its nearby points must shrink; images separated at a level no deeper
/// than half the neighbourhood level witness failure.
pub fn semisaturation_check(nest: &NestedSequence, depth: usize) -> Result<SemisatVerdict> {
    let s = &nest.space;
    let d = s.depth();
    let r = depth.clamp(2, d);
    let w = nest.window();
    let mut table = Vec::new();
    let mut unclear = false;
    for side in [Side::Forward, Side::Backward] {
        let sign = if side == Side::Forward { 1 } else { -1 };
        let phi1 = &nest.maps[&sign];
        for p in 0..s.cell_count(d) as CellId {
            if phi1.contains_deep(s, p) || !(2..=w).any(|n| nest.maps[&(sign * n)].contains_deep(s, p)) {
                continue;
            }
            for l in 1..r {
                let dense = s
                    .descendants(l, s.ancestor(d, p, l), d)
                    .iter()
                    .any(|&q| q != p && phi1.contains_deep(s, q));
                if !dense {
                    return Err(Error::NotDense { level: l });
                }
            }
            match limit_at(nest, side, p, r) {
                Limit::Separates(wit) => return Ok(SemisatVerdict::FailsWithWitness(wit)),
                Limit::Contracts(e) => table.push(e),
                Limit::Unclear => unclear = true,
            }
        }
    }
    Ok(if unclear {
        SemisatVerdict::UnknownUpTo(r)
    } else {
        SemisatVerdict::Admits(table)
    })
}

/// The nested sequence of powers `phi_n = phi^n` of a Bratteli system.
pub fn from_bratteli_powers(s: &BratteliSystem, window: i32) -> NestedSequence {
    let mut positive: Vec<PartialHomeo> = Vec::with_capacity(window.max(0) as usize);
    for n in 0..window.max(0) {
        let next = match n {
            0 => s.phi.clone(),
            _ => positive[n as usize - 1].then(&s.phi, &s.space),
        };
        positive.push(next);
    }
    NestedSequence::from_positive(s.space.clone(), positive, BeyondRule::PowerOfPhi1)
}

/// A deep-cell bijection `psi` with `psi ∘ Φ = Φ' ∘ psi`, compatible with
/// refinement at every checked level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NestConjugacy {
    pub psi: Vec<CellId>,
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NestConjugacyVerdict {
    Conjugate(NestConjugacy),
    Inequivalent(String),
    Unknown(String),
}

fn chains(map: &PhiMap) -> Vec<Vec<CellId>> {
    let mut out = Vec::new();
    for start in 0..map.forward.len() {
        if !matches!(map.backward[start], PhiEntry::Terminal) {
            continue;
        }
        let mut chain = vec![start as CellId];
        let mut c = start;
        while let PhiEntry::Step { image, .. } = map.forward[c] {
            chain.push(image);
            c = image as usize;
        }
        out.push(chain);
    }
    out.sort_by_key(|c| (c.len(), c[0]));
    out
}

fn refinement_compatible(s1: &SymbolicSpace, s2: &SymbolicSpace, psi: &[CellId], levels: usize) -> bool {
    let d = s1.depth();
    for l in 1..levels.min(d) {
        let mut induced: Vec<Option<CellId>> = vec![None; s1.cell_count(l)];
        let mut hit = vec![false; s2.cell_count(l)];
        for (c, &t) in psi.iter().enumerate() {
            let a = s1.ancestor(d, c as CellId, l) as usize;
            let b = s2.ancestor(d, t, l);
            match induced[a] {
                None => {
                    if hit[b as usize] {
                        return false;
                    }
                    hit[b as usize] = true;
                    induced[a] = Some(b);
                }
                Some(x) if x == b => {}
                Some(_) => return false,
            }
        }
    }
    true
}

const MAX_MATCHINGS: usize = 5040;

/// Bounded search for a conjugacy of the Φ-maps of two nested sequences.
///
/// Chains of Φ from `X_min` to `X_max` are matched by length; inequivalence
/// is only reported with a cardinality certificate.
pub fn nested_conjugate_bounded(a: &NestedSequence, b: &NestedSequence, depth: usize) -> NestConjugacyVerdict {
    let (sa, sb) = (&a.space, &b.space);
    let d = sa.depth();
    if sb.depth() != d || (1..=d).any(|l| sa.cell_count(l) != sb.cell_count(l)) {
        return NestConjugacyVerdict::Unknown("the two spaces are materialized differently".into());
    }
    let (xa, xb) = (a.xmax_deep().len(), b.xmax_deep().len());
    if xa != xb {
        return NestConjugacyVerdict::Inequivalent(format!("|X_max| is {xa} against {xb}"));
    }
    let (na, nb) = (a.xmin_deep().len(), b.xmin_deep().len());
    if na != nb {
        return NestConjugacyVerdict::Inequivalent(format!("|X_min| is {na} against {nb}"));
    }
    let (ma, mb) = (PhiMap::new(a), PhiMap::new(b));
    let unknown = |m: &PhiMap| m.forward.iter().chain(&m.backward).any(|e| matches!(e, PhiEntry::Unknown { .. }));
    if unknown(&ma) || unknown(&mb) {
        return NestConjugacyVerdict::Unknown("Φ leaves the resolution on some cell".into());
    }
    let (ta, ca) = phi_towers(&ma);
    let (tb, cb) = phi_towers(&mb);
    if ta != tb || ca != cb {
        return NestConjugacyVerdict::Inequivalent(format!("Φ-tower heights {ta:?} against {tb:?}"));
    }
    if ca > 0 {
        return NestConjugacyVerdict::Unknown("Φ has cycles at this resolution".into());
    }
    let (cha, chb) = (chains(&ma), chains(&mb));
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut i = 0;
    while i < cha.len() {
        let j = (i..cha.len()).find(|&j| cha[j].len() != cha[i].len()).unwrap_or(cha.len());
        groups.push(((i..j).collect(), (i..j).collect()));
        i = j;
    }
    let mut perms: Vec<Vec<usize>> = vec![(0..chb.len()).collect()];
    for (src, dst) in &groups {
        let mut next = Vec::new();
        for base in &perms {
            for p in permutations(dst) {
                let mut q = base.clone();
                for (k, &x) in src.iter().enumerate() {
                    q[x] = p[k];
                }
                next.push(q);
                if next.len() >= MAX_MATCHINGS {
                    break;
                }
            }
        }
        perms = next;
    }
    for p in &perms {
        let mut psi = vec![0; ma.forward.len()];
        for (x, &y) in p.iter().enumerate() {
            for (u, v) in cha[x].iter().zip(&chb[y]) {
                psi[*u as usize] = *v;
            }
        }
        if refinement_compatible(sa, sb, &psi, depth) {
            return NestConjugacyVerdict::Conjugate(NestConjugacy {
                psi,
                levels: depth.min(d),
            });
        }
    }
    NestConjugacyVerdict::Unknown(format!("none of {} chain matchings refines consistently", perms.len()))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
            if out.len() >= MAX_MATCHINGS {
                return out;
            }
        }
    }
    out
}

/// Deep-cell orbit labels of the relation generated by `maps`.
pub fn orbit_partition(space: &SymbolicSpace, maps: &[&PartialHomeo]) -> Vec<usize> {
    let n = space.cell_count(space.depth());
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for phi in maps {
        for c in 0..n as CellId {
            if let Deep::Image(t) = deep(space, phi, c) {
                let (a, b) = (find(&mut parent, c as usize), find(&mut parent, t as usize));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|x| find(&mut parent, x)).collect()
}

fn projected_pairs(space: &SymbolicSpace, labels: &[usize], level: usize) -> BTreeSet<(CellId, CellId)> {
    let d = space.depth();
    let mut classes: BTreeMap<usize, BTreeSet<CellId>> = BTreeMap::new();
    for (c, &lab) in labels.iter().enumerate() {
        classes.entry(lab).or_default().insert(space.ancestor(d, c as CellId, level));
    }
    let mut out = BTreeSet::new();
    for cells in classes.values() {
        for &x in cells {
            for &y in cells {
                out.insert((x, y));
            }
        }
    }
    out
}

/// For each level up to `max_level`, whether the orbit relation of the
/// nested sequence and that of the system project to the same cell graph.
/// The deepest level is skipped: there the last cells absorb the limit
/// points and the two truncations glue orbits differently.
pub fn relation_equality(nest: &NestedSequence, sys: &BratteliSystem, max_level: usize) -> Vec<(usize, bool)> {
    let s = &nest.space;
    let nest_maps: Vec<&PartialHomeo> = nest.maps.values().collect();
    let r1 = orbit_partition(s, &nest_maps);
    let r2 = orbit_partition(s, &[&sys.phi]);
    (1..=max_level.min(s.depth() - 1))
        .map(|l| (l, projected_pairs(s, &r1, l) == projected_pairs(s, &r2, l)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{
        dh_nested, nonsemisat_bratteli, nonsemisat_nested, odometer_system, rotation_tables, two_max_nested,
    };
    use crate::space::binary_space;

    fn full_rotation(depth: usize, window: i32) -> NestedSequence {
        let space = binary_space(depth);
        let maps = (1..=window as i64)
            .map(|n| {
                let whole = Domain::whole(&space);
                PartialHomeo::new(&space, whole.clone(), whole, rotation_tables(&space, n), BTreeMap::new()).unwrap()
            })
            .collect();
        NestedSequence::from_positive(space, maps, BeyondRule::Truncated)
    }

    #[test]
    fn dh_is_nested() {
        let n = dh_nested(6, 16, 0);
        assert_eq!(validate_nested(&n), vec![]);
        assert_eq!(n.xmax_deep(), BTreeSet::from([0]));
        assert_eq!(n.xmin_deep(), BTreeSet::from([63]));
    }

    #[test]
    fn broken_identity_and_nesting_are_reported() {
        let mut n = dh_nested(5, 4, 0);
        let phi1 = n.maps[&1].clone();
        n.maps.insert(0, phi1);
        assert!(validate_nested(&n).iter().any(|v| v.n == 0 && v.m == 0));
        let mut n = dh_nested(5, 4, 0);
        let phi3 = n.maps[&3].clone();
        n.maps.insert(2, phi3);
        assert!(validate_nested(&n).iter().any(|v| v.n == 1 && v.m == 1));
    }

    #[test]
    fn phi_skips_the_gap() {
        let n = dh_nested(8, 8, 0);
        let s = &n.space;
        let x_minus_1 = s.point_at(8, 255, 1);
        let (k, img) = phi(&n, &x_minus_1, 8).unwrap();
        assert_eq!((k, s.resolve(&img).unwrap()), (2, 1));
        let x3 = s.point_at(8, 7, 0);
        let (k, img) = phi(&n, &x3, 8).unwrap();
        assert_eq!((k, s.resolve(&img).unwrap()), (1, 8));
        assert_eq!(phi(&n, &s.point_at(8, 0, 0), 8).unwrap_err(), Error::MaximalPoint);
    }

    #[test]
    fn dh_cocycle_values() {
        let n = dh_nested(8, 8, 0);
        let s = &n.space;
        let map = PhiMap::new(&n);
        for k in 1..7u32 {
            let x = (1 << k) - 1;
            let y = x + 2;
            assert_eq!(counting_cocycle_cells(&map, x, y, 10).unwrap(), CocycleValue::Value(2));
            assert_eq!(counting_cocycle_cells(&map, y, x, 10).unwrap(), CocycleValue::Value(-2));
        }
        assert_eq!(counting_cocycle_cells(&map, 255, 1, 10).unwrap(), CocycleValue::Value(1));
        let p = s.point_at(8, 17, 0);
        assert_eq!(counting_cocycle_nested(&n, &p, &p, 8).unwrap(), CocycleValue::Value(0));
    }

    #[test]
    fn dh_discontinuity() {
        let n = dh_nested(8, 8, 0);
        let ContinuityVerdict::Discontinuity(ws) = continuity_diagnostic(&n, 8) else {
            panic!("expected a discontinuity");
        };
        let w = ws
            .iter()
            .find(|w| w.n == 2 && w.second == "11111111")
            .expect("witness at the minimal point");
        assert_eq!((w.first.as_str(), w.first_value, w.second_value), ("11111110", 2, 1));
        assert!(ws.iter().all(|w| replay_discontinuity(&n, w)));
        let mut forged = w.clone();
        forged.first_value = 3;
        assert!(!replay_discontinuity(&n, &forged));
    }

    #[test]
    fn odometer_powers_are_continuous() {
        let n = from_bratteli_powers(&odometer_system(6), 5);
        assert!(validate_nested(&n).is_empty());
        assert_eq!(continuity_diagnostic(&n, 6), ContinuityVerdict::ContinuousUpTo(6));
        let single = NestedSequence::from_positive(n.space.clone(), vec![n.maps[&1].clone()], BeyondRule::Empty);
        assert_eq!(continuity_diagnostic(&single, 6), ContinuityVerdict::ContinuousUpTo(6));
    }

    #[test]
    fn dh_afnest_at_three() {
        let n = dh_nested(10, 16, 0);
        let u = ClopenSet::new(3, [7]);
        let v = ClopenSet::new(3, [0]);
        let AfnestVerdict::Found(w) = check_afnest(&n, &u, &v, 6).unwrap() else {
            panic!("expected Found");
        };
        assert_eq!(w.level, 3);
        assert_eq!(w.towers, vec![8]);
        assert_eq!(w.m, 10);
        assert!(validate_nested(&w.restricted).is_empty());
        assert!(matches!(check_lemma_conditions(&n), LemmaVerdict::Violations(v) if v.iter().any(|x| x.0 == 3)));
        assert!(check_afnest(&n, &ClopenSet::new(1, [0]), &v, 6).is_err());
    }

    #[test]
    fn rotation_is_not_af() {
        let n = full_rotation(6, 8);
        let x = n.space.full(1);
        assert!(matches!(check_afnest(&n, &x, &x, 5).unwrap(), AfnestVerdict::NotFound { depth: 5 }));
    }

    #[test]
    fn trivial_sequence_satisfies_lemma() {
        let n = NestedSequence::from_positive(binary_space(4), vec![], BeyondRule::Empty);
        assert_eq!(check_lemma_conditions(&n), LemmaVerdict::Satisfied { m: 1 });
    }

    #[test]
    fn nonsemisat_phi2_and_witness() {
        let n = nonsemisat_nested(12);
        let s = &n.space;
        assert!(validate_nested(&n).is_empty());
        let p = s.point_by_names(&["T1:1"], "stay").unwrap();
        let img = n.maps[&2].apply(s, &p, 12).unwrap();
        assert_eq!(s.cell_name(12, s.resolve(&img).unwrap()), "T12:2");
        let SemisatVerdict::FailsWithWitness(w) = semisaturation_check(&n, 12).unwrap() else {
            panic!("expected a witness");
        };
        assert_eq!(w.point, "T12:1");
        assert_eq!(w.separation_level, 1);
        let cells = BTreeSet::from([w.first_image_cell.as_str(), w.second_image_cell.as_str()]);
        assert_eq!(cells, BTreeSet::from(["T1:1", "T1:2"]));
    }

    #[test]
    fn dh_admits_semisaturation() {
        let n = dh_nested(8, 8, 0);
        let SemisatVerdict::Admits(table) = semisaturation_check(&n, 8).unwrap() else {
            panic!("expected Admits");
        };
        assert!(table.iter().any(|e| e.point == "11111111" && e.image_cell.chars().all(|c| c == '0')));
    }

    #[test]
    fn nonsemisat_relations_agree() {
        let n = nonsemisat_nested(12);
        let b = nonsemisat_bratteli(12);
        let r = relation_equality(&n, &b, 12);
        assert_eq!(r.len(), 11);
        assert!(r.iter().all(|x| x.1));
    }

    #[test]
    fn conjugacy_search() {
        let a = dh_nested(7, 8, 0);
        let b = dh_nested(7, 8, 37);
        let NestConjugacyVerdict::Conjugate(w) = nested_conjugate_bounded(&a, &b, 7) else {
            panic!("expected a conjugacy");
        };
        assert!((0..128u32).all(|c| w.psi[c as usize] == (c + 37) % 128));
        assert!(matches!(nested_conjugate_bounded(&a, &a, 7), NestConjugacyVerdict::Conjugate(_)));
        let two = two_max_nested(7, 8);
        assert!(matches!(nested_conjugate_bounded(&a, &two, 7), NestConjugacyVerdict::Inequivalent(_)));
    }

    #[test]
    fn extension_by_rule() {
        let n = nonsemisat_nested(8).extended(5);
        assert_eq!(n.window(), 5);
        assert!(validate_nested(&n).is_empty());
    }
}
