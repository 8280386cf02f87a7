//! Bratteli systems: axiom checks, the forward/backward equivalence probe,
//! and periodic-cycle search.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{pullback_union_max, CellId, ClopenSet, PartialHomeo, SymbolicSpace};

/// A partial dynamical system `(X, X_max, X_min, phi)`. `X_max` and `X_min`
/// are read off the removed sets of the domain and range of `phi`.
#[derive(Clone, Debug)]
pub struct BratteliSystem {
    pub space: SymbolicSpace,
    pub phi: PartialHomeo,
}

impl BratteliSystem {
    pub fn new(space: SymbolicSpace, phi: PartialHomeo) -> Result<Self> {
        let problems = phi.validate(&space);
        if let Some(p) = problems.first() {
            return Err(Error::Invalid(p.clone()));
        }
        Ok(BratteliSystem { space, phi })
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    /// Clopen approximation of `X_max` at `level`.
    pub fn xmax(&self, level: usize) -> ClopenSet {
        self.phi.domain().removed_at(&self.space, level)
    }

    /// Clopen approximation of `X_min` at `level`.
    pub fn xmin(&self, level: usize) -> ClopenSet {
        self.phi.range().removed_at(&self.space, level)
    }

    /// The same system with time reversed.
    pub fn reversed(&self) -> BratteliSystem {
        BratteliSystem {
            space: self.space.clone(),
            phi: self.phi.inverse(),
        }
    }

    /// Invariant violations: nested approximations and unresolved cells.
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.phi.validate(&self.space);
        let d = self.depth();
        for l in 1..d {
            if !self.xmax(l + 1).is_subset(&self.xmax(l), &self.space) {
                out.push(format!("X_max approximation grows from level {l} to {}", l + 1));
            }
            if !self.xmin(l + 1).is_subset(&self.xmin(l), &self.space) {
                out.push(format!("X_min approximation grows from level {l} to {}", l + 1));
            }
        }
        let removed = self.xmax(d);
        for c in 0..self.space.cell_count(d) as CellId {
            if !removed.cells.contains(&c) && self.phi.map_deep(&self.space, c).is_err() {
                out.push(format!(
                    "deep cell `{}` outside X_max has no image",
                    self.space.cell_name(d, c)
                ));
            }
        }
        out
    }
}

/// Outcome of a covering check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AxiomVerdict {
    /// `∪_{n <= steps}` of the iterates covers `X`; images were resolved to `level`.
    Satisfied { steps: usize, level: usize },
    FailedUpTo(usize),
}

impl AxiomVerdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, AxiomVerdict::Satisfied { .. })
    }
}

fn cover(space: &SymbolicSpace, phi: &PartialHomeo, u: &ClopenSet, bound: usize) -> Result<AxiomVerdict> {
    let mut covered = u.clone();
    let mut frontier = u.clone();
    for n in 0..=bound {
        if covered.is_full(space) {
            return Ok(AxiomVerdict::Satisfied {
                steps: n,
                level: covered.level,
            });
        }
        if n == bound || frontier.is_empty() {
            break;
        }
        let img = phi.image_clopen(space, &frontier)?;
        frontier = img.difference(&covered, space);
        covered = covered.union(&frontier, space);
    }
    Ok(AxiomVerdict::FailedUpTo(bound))
}

/// Condition i): `∪_{n>=0} phi^n(U) = X` within `bound` steps.
pub fn check_axiom_forward(s: &BratteliSystem, u: &ClopenSet, bound: usize) -> Result<AxiomVerdict> {
    if !s.xmin(u.level).is_subset(u, &s.space) {
        return Err(Error::Invalid("U does not contain the X_min approximation".into()));
    }
    cover(&s.space, &s.phi, u, bound)
}

/// Condition ii): `∪_{n>=0} phi^{-n}(V) = X` within `bound` steps.
pub fn check_axiom_backward(s: &BratteliSystem, v: &ClopenSet, bound: usize) -> Result<AxiomVerdict> {
    if !s.xmax(v.level).is_subset(v, &s.space) {
        return Err(Error::Invalid("V does not contain the X_max approximation".into()));
    }
    cover(&s.space, &s.phi.inverse(), v, bound)
}

/// One sampled pair of the equivalence probe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProbeRow {
    pub u: ClopenSet,
    pub v: ClopenSet,
    pub forward: AxiomVerdict,
    pub backward: AxiomVerdict,
}

impl ProbeRow {
    pub fn agrees(&self) -> bool {
        self.forward.is_satisfied() == self.backward.is_satisfied()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn disagreements(&self) -> Vec<&ProbeRow> {
        self.rows.iter().filter(|r| !r.agrees()).collect()
    }
}

const EXHAUSTIVE_LEVELS: usize = 4;
const EXHAUSTIVE_CAP: usize = 256;

/// Samples clopen `U ⊇ X_min` (all of them at shallow levels when few,
/// seeded random otherwise), pairs each with `V = phi^{-1}(U) ∪ X_max` and
/// compares the forward verdict on `U` with the backward verdict on `V`.
pub fn axiom_equivalence_probe(s: &BratteliSystem, samples: usize, bound: usize, seed: u64) -> Result<ProbeReport> {
    let space = &s.space;
    let mut seen: BTreeSet<ClopenSet> = BTreeSet::new();
    let mut us: Vec<ClopenSet> = Vec::new();
    for level in 1..=EXHAUSTIVE_LEVELS.min(s.depth()) {
        let forced = s.xmin(level);
        let free: Vec<CellId> = (0..space.cell_count(level) as CellId)
            .filter(|c| !forced.cells.contains(c))
            .collect();
        if free.len() >= usize::BITS as usize || (1usize << free.len()) > EXHAUSTIVE_CAP {
            continue;
        }
        for mask in 0..1usize << free.len() {
            let cells = forced
                .cells
                .iter()
                .copied()
                .chain(free.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &c)| c));
            let u = ClopenSet::new(level, cells).canonical(space);
            if seen.insert(u.clone()) {
                us.push(u);
            }
            if us.len() >= samples {
                break;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while us.len() < samples && attempts < samples * 50 {
        attempts += 1;
        let level = rng.gen_range(1..=s.depth());
        let forced = s.xmin(level);
        let density: f64 = rng.gen_range(0.05..0.95);
        let cells = (0..space.cell_count(level) as CellId).filter(|c| forced.cells.contains(c) || rng.gen_bool(density));
        let u = ClopenSet::new(level, cells.collect::<Vec<_>>()).canonical(space);
        if seen.insert(u.clone()) {
            us.push(u);
        }
    }
    let mut rows = Vec::with_capacity(us.len());
    for u in us.into_iter().take(samples) {
        let v = pullback_union_max(space, &s.phi, &u)?;
        let forward = check_axiom_forward(s, &u, bound)?;
        let backward = check_axiom_backward(s, &v, bound)?;
        rows.push(ProbeRow { u, v, forward, backward });
    }
    Ok(ProbeReport { rows })
}

/// A cycle of deepest-level cells avoiding `X_max`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodicWitness {
    pub cell: String,
    pub level: usize,
    pub period: usize,
}

/// Searches cycles of length `<= bound` of `phi` on deepest-level cells.
pub fn detect_periodic(s: &BratteliSystem, bound: usize) -> Option<PeriodicWitness> {
    let d = s.depth();
    let n = s.space.cell_count(d);
    let next: Vec<Option<CellId>> = (0..n as CellId).map(|c| s.phi.map_deep(&s.space, c).ok()).collect();
    let mut state = vec![0u8; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut trail = Vec::new();
        let mut c = start;
        loop {
            if state[c] == 2 {
                break;
            }
            if state[c] == 1 {
                let pos = trail.iter().position(|&x| x == c).expect("on current trail");
                let period = trail.len() - pos;
                if period <= bound {
                    let rep = *trail[pos..].iter().min().expect("nonempty cycle");
                    return Some(PeriodicWitness {
                        cell: s.space.cell_name(d, rep as CellId).to_string(),
                        level: d,
                        period,
                    });
                }
                break;
            }
            state[c] = 1;
            trail.push(c);
            match next[c] {
                Some(t) => c = t as usize,
                None => break,
            }
        }
        for x in trail {
            state[x] = 2;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{broken_system, odometer_system};
    use crate::space::Domain;

    #[test]
    fn odometer_forward_and_backward() {
        let s = odometer_system(6);
        let u = ClopenSet::new(1, [0]);
        assert_eq!(check_axiom_forward(&s, &u, 10).unwrap(), AxiomVerdict::Satisfied { steps: 1, level: 1 });
        let v = ClopenSet::new(1, [1]);
        assert!(matches!(check_axiom_backward(&s, &v, 10).unwrap(), AxiomVerdict::Satisfied { steps: 1, .. }));
        let x = s.space.full(1);
        assert!(matches!(check_axiom_forward(&s, &x, 0).unwrap(), AxiomVerdict::Satisfied { steps: 0, .. }));
        assert!(check_axiom_forward(&s, &ClopenSet::new(1, [1]), 3).is_err());
    }

    #[test]
    fn broken_system_fails() {
        let s = broken_system(5);
        let a = ClopenSet::new(1, [0]);
        assert_eq!(check_axiom_forward(&s, &a, 100).unwrap(), AxiomVerdict::FailedUpTo(100));
        assert_eq!(check_axiom_backward(&s, &a, 100).unwrap(), AxiomVerdict::FailedUpTo(100));
        assert_eq!(detect_periodic(&s, 4).unwrap().period, 1);
    }

    #[test]
    fn odometer_probe_agrees() {
        let s = odometer_system(6);
        let r = axiom_equivalence_probe(&s, 30, 80, 7).unwrap();
        assert_eq!(r.rows.len(), 30);
        assert!(r.disagreements().is_empty());
        assert!(r.rows.iter().all(|row| row.forward.is_satisfied()));
    }

    #[test]
    fn odometer_has_no_cycle() {
        assert!(detect_periodic(&odometer_system(8), 1 << 9).is_none());
    }

    #[test]
    fn identity_on_one_cell() {
        let space = SymbolicSpace::new(vec![vec!["x".into()]], vec![vec![]], vec![]).unwrap();
        let phi = PartialHomeo::identity(&space);
        let s = BratteliSystem::new(space, phi).unwrap();
        assert_eq!(
            detect_periodic(&s, 1),
            Some(PeriodicWitness { cell: "x".into(), level: 1, period: 1 })
        );
        assert!(matches!(s.phi.domain(), Domain::Exact(_)));
    }
}
