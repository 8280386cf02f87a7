//! Built-in instances: the 2-adic odometer, the two nested-sequence
//! examples, the stationary 2-adic diagram, a broken two-component system
//! and random diagram generators.

use std::collections::BTreeMap;

use rand::Rng;

use crate::bratteli::{Extension, OrderedBratteliDiagram, OrderedDiagram};
use crate::error::{Error, Result};
use crate::nested::{from_bratteli_powers, BeyondRule, NestedSequence};
use crate::pds::BratteliSystem;
use crate::space::{binary_space, binary_word, CellId, CellImage, ClopenSet, ClosedApprox, Domain, PartialHomeo, SymbolicSpace, TailRule};

pub use crate::bratteli::{dyadic, two_extremes};

/// Forward tables of the odometer `i -> i + 1` on binary words; the
/// all-ones cell of every level carries out and stays unresolved.
pub fn odometer_tables(space: &SymbolicSpace) -> Vec<Vec<CellImage>> {
    (1..=space.depth())
        .map(|l| {
            let n = 1u32 << l;
            (0..n)
                .map(|i| if i + 1 == n { CellImage::Unresolved } else { CellImage::Resolved(i + 1) })
                .collect()
        })
        .collect()
}

/// The 2-adic odometer as a Bratteli system with `X_max = {1^∞}` and
/// `X_min = {0^∞}`.
pub fn odometer_system(depth: usize) -> BratteliSystem {
    let space = binary_space(depth);
    let top = (1u32 << depth) - 1;
    let xmax = ClosedApprox::from_deep_cells(&space, [top]);
    let xmin = ClosedApprox::from_deep_cells(&space, [0]);
    let phi = PartialHomeo::new(
        &space,
        Domain::Complement(xmax),
        Domain::Complement(xmin),
        odometer_tables(&space),
        BTreeMap::new(),
    )
    .expect("odometer tables are consistent");
    BratteliSystem::new(space, phi).expect("odometer system is valid")
}

/// Two clopen halves `[a]` and `[b]`, each a copy of the binary space.
pub fn two_halves_space(depth: usize) -> SymbolicSpace {
    let half = |n: usize| 1u32 << (n - 1);
    let mut names = Vec::with_capacity(depth);
    let mut parents = Vec::with_capacity(depth);
    for n in 1..=depth {
        let h = half(n);
        let mut nm = Vec::with_capacity(2 * h as usize);
        for side in ["a", "b"] {
            for i in 0..h {
                nm.push(format!("{side}{}", binary_word(i, n - 1)));
            }
        }
        names.push(nm);
        if n == 1 {
            parents.push(Vec::new());
        } else {
            let hp = half(n - 1);
            parents.push((0..2 * h).map(|c| if c < h { c % hp } else { hp + (c - h) % hp }).collect());
        }
    }
    let tail = |one: bool| -> Vec<Vec<Option<CellId>>> {
        (1..depth)
            .map(|n| {
                let h = half(n);
                let hn = half(n + 1);
                (0..2 * h)
                    .map(|c| {
                        let bump = if one { h } else { 0 };
                        Some(if c < h { c + bump } else { hn + (c - h) + bump })
                    })
                    .collect()
            })
            .collect()
    };
    SymbolicSpace::new(
        names,
        parents,
        vec![TailRule::new("zero", tail(false)), TailRule::new("one", tail(true))],
    )
    .expect("two-halves space is well formed")
}

/// Odometer on `[a]` (with `X_max = {a1^∞}`, `X_min = {a0^∞}`) and the
/// identity on `[b]`: a partial dynamical system violating both axioms.
pub fn broken_system(depth: usize) -> BratteliSystem {
    let space = two_halves_space(depth);
    let forward = (1..=depth)
        .map(|n| {
            let h = 1u32 << (n - 1);
            (0..2 * h)
                .map(|c| {
                    if c >= h {
                        CellImage::Resolved(c)
                    } else if c + 1 == h {
                        CellImage::Unresolved
                    } else {
                        CellImage::Resolved(c + 1)
                    }
                })
                .collect()
        })
        .collect();
    let top = (1u32 << (depth - 1)) - 1;
    let phi = PartialHomeo::new(
        &space,
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [top])),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [0])),
        forward,
        BTreeMap::new(),
    )
    .expect("broken tables are consistent");
    BratteliSystem::new(space, phi).expect("tables validate")
}

/// Tables of `i -> i + n mod 2^l` on every level of the binary space.
pub(crate) fn rotation_tables(space: &SymbolicSpace, n: i64) -> Vec<Vec<CellImage>> {
    (1..=space.depth())
        .map(|l| {
            let m = 1i64 << l;
            (0..m).map(|i| CellImage::Resolved((i + n).rem_euclid(m) as CellId)).collect()
        })
        .collect()
}

/// The odometer with `X_max = {x}` and `X_min = {phi(x)}`, where `x` is the
/// point of deep cell `base`.
pub fn odometer_system_at(depth: usize, base: CellId) -> BratteliSystem {
    let space = binary_space(depth);
    let top = 1u32 << depth;
    let phi = PartialHomeo::new(
        &space,
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [base % top])),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [(base + 1) % top])),
        rotation_tables(&space, 1),
        BTreeMap::new(),
    )
    .expect("rotation tables are consistent");
    BratteliSystem::new(space, phi).expect("odometer system is valid")
}

/// Offsets `k` of the points `x_k = phi^k(x_0)` removed from `dom phi_n`.
pub fn dh_removed_offsets(n: i64) -> Vec<i64> {
    match n {
        1 => vec![-2, -1, 0],
        2 => vec![-3, 0],
        _ => (-n - 1..=0).filter(|&k| k != -n && k != -1).collect(),
    }
}

/// The nested sequence `phi_n = phi^n` restricted to `X \ X_max^n` built on
/// the odometer, with `x_0` the point of deep cell `base`. Maps beyond
/// `window` are not materialized.
pub fn dh_nested(depth: usize, window: i32, base: CellId) -> NestedSequence {
    let space = binary_space(depth);
    let top = 1i64 << depth;
    assert!((window as i64) + 2 < top, "window too large for the resolution");
    let cell = |k: i64| (base as i64 + k).rem_euclid(top) as CellId;
    let positive = (1..=window as i64)
        .map(|n| {
            let removed = dh_removed_offsets(n);
            PartialHomeo::new(
                &space,
                Domain::Complement(ClosedApprox::from_deep_cells(&space, removed.iter().map(|&k| cell(k)))),
                Domain::Complement(ClosedApprox::from_deep_cells(&space, removed.iter().map(|&k| cell(k + n)))),
                rotation_tables(&space, n),
                BTreeMap::new(),
            )
            .expect("rotation tables are consistent")
        })
        .collect();
    NestedSequence::from_positive(space, positive, BeyondRule::Truncated)
}

/// Index of the singleton cell `(1/m, i)`.
fn sing(m: usize, i: usize) -> CellId {
    (2 * (m - 1) + (i - 1)) as CellId
}

/// Index of the tail cell `T_n^i = {(1/m, i) : m > n} ∪ {(0, i)}` at level `n`.
fn tail_cell(n: usize, i: usize) -> CellId {
    (2 * n + (i - 1)) as CellId
}

/// `X = {(1/m, i)} ∪ {(0, 1), (0, 2)}`: level `n` holds the singletons with
/// `m <= n` and the two tails toward `(0, 1)` and `(0, 2)`.
pub fn nonsemisat_space(depth: usize) -> SymbolicSpace {
    let mut names = Vec::with_capacity(depth);
    let mut parents = Vec::with_capacity(depth);
    for n in 1..=depth {
        let mut nm = Vec::with_capacity(2 * n + 2);
        for m in 1..=n {
            for i in 1..=2 {
                nm.push(format!("1/{m}:{i}"));
            }
        }
        nm.push(format!("T{n}:1"));
        nm.push(format!("T{n}:2"));
        names.push(nm);
        parents.push(if n == 1 {
            Vec::new()
        } else {
            (0..2 * n + 2)
                .map(|c| if c < 2 * n { c as CellId } else { (c - 2) as CellId })
                .collect()
        });
    }
    let stay = (1..depth)
        .map(|n| {
            (0..2 * n + 2)
                .map(|c| Some(if c < 2 * n { c as CellId } else { tail_cell(n + 1, c - 2 * n + 1) }))
                .collect()
        })
        .collect();
    SymbolicSpace::new(names, parents, vec![TailRule::new("stay", stay)]).expect("space is well formed")
}

/// Level-by-level tables for a map given on singletons by `f`; tails are
/// resolved by `tails` where given, deep cells use `points`.
fn singleton_map(
    space: &SymbolicSpace,
    f: impl Fn(usize, usize) -> (usize, usize),
    tails: impl Fn(usize) -> Option<usize>,
    domain: Domain,
    range: Domain,
    points: BTreeMap<CellId, CellId>,
) -> PartialHomeo {
    let d = space.depth();
    let forward = (1..=d)
        .map(|l| {
            let mut row = Vec::with_capacity(2 * l + 2);
            for m in 1..=l {
                for i in 1..=2 {
                    let (m2, i2) = f(m, i);
                    row.push(if m2 <= l { CellImage::Resolved(sing(m2, i2)) } else { CellImage::Unresolved });
                }
            }
            for i in 1..=2 {
                row.push(match tails(i) {
                    Some(j) => CellImage::Resolved(tail_cell(l, j)),
                    None => CellImage::Unresolved,
                });
            }
            row
        })
        .collect();
    PartialHomeo::new(space, domain, range, forward, points).expect("singleton tables are consistent")
}

fn nonsemisat_phi1(m: usize, i: usize) -> (usize, usize) {
    match (m % 2, i) {
        (1, _) => (m + 1, i),
        (_, 1) => (m - 1, 2),
        _ => (m + 1, 1),
    }
}

/// The nested sequence with `phi_1` shuffling neighbouring singletons and
/// `phi_2 = phi_1^2` on the isolated points plus `(0, 1) -> (0, 2)`.
pub fn nonsemisat_nested(depth: usize) -> NestedSequence {
    assert!(depth >= 2, "need at least two levels");
    let space = nonsemisat_space(depth);
    let d = depth;
    let phi1 = singleton_map(
        &space,
        nonsemisat_phi1,
        |_| None,
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [tail_cell(d, 1), tail_cell(d, 2)])),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [sing(1, 1), tail_cell(d, 1), tail_cell(d, 2)])),
        BTreeMap::new(),
    );
    let phi2 = singleton_map(
        &space,
        |m, i| {
            let (m1, i1) = nonsemisat_phi1(m, i);
            nonsemisat_phi1(m1, i1)
        },
        |_| None,
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [tail_cell(d, 2)])),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [sing(1, 1), sing(2, 1), tail_cell(d, 1)])),
        BTreeMap::from([(tail_cell(d, 1), tail_cell(d, 2))]),
    );
    NestedSequence::from_positive(space, vec![phi1, phi2], BeyondRule::ParityPowers)
}

/// The Bratteli system `(1/n, 1) -> (1/n, 2) -> (1/(n+1), 1)`,
/// `(0, 1) -> (0, 2)` with `X_max = {(0, 2)}` and `X_min = {(1, 1), (0, 1)}`.
///
/// At the deepest level the tail cell toward `(0, 1)` also absorbs the
/// image of the last singleton, so its approximation there is `{(1, 1)}`.
pub fn nonsemisat_bratteli(depth: usize) -> BratteliSystem {
    assert!(depth >= 2, "need at least two levels");
    let space = nonsemisat_space(depth);
    let d = depth;
    let xmin = ClosedApprox {
        levels: (1..=d)
            .map(|l| {
                let mut cells = vec![sing(1, 1)];
                if l < d {
                    cells.push(tail_cell(l, 1));
                }
                ClopenSet::new(l, cells)
            })
            .collect(),
    };
    let phi = singleton_map(
        &space,
        |m, i| if i == 1 { (m, 2) } else { (m + 1, 1) },
        |i| (i == 1).then_some(2),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [tail_cell(d, 2)])),
        Domain::Complement(xmin),
        BTreeMap::from([(sing(d, 2), tail_cell(d, 1))]),
    );
    BratteliSystem::new(space, phi).expect("repaired system is valid")
}

/// An odometer on each of the halves `[a]` and `[b]`: two maximal and two
/// minimal points.
pub fn two_odometers_system(depth: usize) -> BratteliSystem {
    let space = two_halves_space(depth);
    let forward = (1..=depth)
        .map(|n| {
            let h = 1u32 << (n - 1);
            (0..2 * h)
                .map(|c| {
                    let (off, i) = if c < h { (0, c) } else { (h, c - h) };
                    if i + 1 == h {
                        CellImage::Unresolved
                    } else {
                        CellImage::Resolved(off + i + 1)
                    }
                })
                .collect()
        })
        .collect();
    let h = 1u32 << (depth - 1);
    let phi = PartialHomeo::new(
        &space,
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [h - 1, 2 * h - 1])),
        Domain::Complement(ClosedApprox::from_deep_cells(&space, [0, h])),
        forward,
        BTreeMap::new(),
    )
    .expect("two-odometer tables are consistent");
    BratteliSystem::new(space, phi).expect("two-odometer system is valid")
}

/// Powers of [`two_odometers_system`] as a nested sequence.
pub fn two_max_nested(depth: usize, window: i32) -> NestedSequence {
    from_bratteli_powers(&two_odometers_system(depth), window)
}

/// A constructed built-in object.
#[derive(Clone, Debug)]
pub enum Builtin {
    System(BratteliSystem),
    Diagram(OrderedBratteliDiagram),
    Nested(NestedSequence),
}

/// Names accepted by [`build`], with a one-line description.
pub const CATALOG: &[(&str, &str)] = &[
    ("odometer_system", "2-adic odometer, X_max = {1^inf}"),
    ("odometer_system_at", "2-adic odometer with X_max at a chosen base cell"),
    ("broken_system", "odometer on [a], identity on [b]; violates both axioms"),
    ("two_odometers", "odometers on two halves; two maximal points"),
    ("nonsemisat_bratteli", "repaired Bratteli system on the two-limit-point space"),
    ("dyadic_diagram", "stationary 2-adic ordered diagram"),
    ("two_extremes_diagram", "diagram with two maximal and two minimal paths"),
    ("dh_nested", "odometer powers with shrinking domains; discontinuous cocycle"),
    ("nonsemisat_nested", "nested sequence admitting no semi-saturation"),
    ("two_max_nested", "powers of the two-odometer system"),
];

/// Builds a catalog entry at the given resolution. `base` is the deep cell of
/// the base point for the odometer and the first nested example.
pub fn build(name: &str, depth: usize, base: Option<CellId>) -> Result<Builtin> {
    if depth < 2 {
        return Err(Error::Invalid("depth must be at least 2".into()));
    }
    let window = ((1i64 << depth.min(20)) - 3).min(16) as i32;
    Ok(match name {
        "odometer_system" => Builtin::System(odometer_system(depth)),
        "odometer_system_at" => Builtin::System(odometer_system_at(depth, base.unwrap_or((1 << depth) - 1))),
        "broken_system" => Builtin::System(broken_system(depth)),
        "two_odometers" => Builtin::System(two_odometers_system(depth)),
        "nonsemisat_bratteli" => Builtin::System(nonsemisat_bratteli(depth)),
        "dyadic_diagram" => Builtin::Diagram(dyadic(depth)),
        "two_extremes_diagram" => Builtin::Diagram(two_extremes(depth)),
        "dh_nested" => Builtin::Nested(dh_nested(depth, window, base.unwrap_or(0))),
        "nonsemisat_nested" => Builtin::Nested(nonsemisat_nested(depth)),
        "two_max_nested" => Builtin::Nested(two_max_nested(depth, window)),
        other => return Err(Error::UnknownName(other.to_string())),
    })
}

/// A random valid finite ordered Bratteli diagram.
pub fn random_diagram<R: Rng>(rng: &mut R, levels: usize, max_vertices: usize, max_fiber: usize) -> OrderedBratteliDiagram {
    let mut out = Vec::with_capacity(levels);
    let mut sources = 1;
    for _ in 0..levels {
        let ranges = rng.gen_range(1..=max_vertices.max(1));
        let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); ranges];
        for v in 0..sources {
            fibers[rng.gen_range(0..ranges)].push(v);
        }
        for f in fibers.iter_mut() {
            let want = rng.gen_range(1..=max_fiber.max(1));
            while f.len() < want {
                f.push(rng.gen_range(0..sources));
            }
            for i in (1..f.len()).rev() {
                let j = rng.gen_range(0..=i);
                f.swap(i, j);
            }
        }
        out.push(OrderedDiagram::from_fibers(sources, &fibers).expect("endpoints in range"));
        sources = ranges;
    }
    OrderedBratteliDiagram::from_levels(out, Extension::None).expect("random levels compose")
}

/// Random strictly increasing cut levels ending at `levels`.
pub fn random_cuts<R: Rng>(rng: &mut R, levels: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..levels).filter(|_| rng.gen_bool(0.5)).collect();
    cuts.push(levels);
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pds::detect_periodic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructed_objects_validate() {
        assert!(odometer_system(6).validate().is_empty());
        assert!(broken_system(5).validate().is_empty());
        assert!(dyadic(3).validate().is_empty());
    }

    #[test]
    fn two_halves_names() {
        let s = two_halves_space(3);
        assert_eq!(s.cell_name(3, 0), "a00");
        assert_eq!(s.cell_name(3, 5), "b10");
        assert_eq!(s.parent(3, 5), 3);
        assert_eq!(s.cell_name(2, 3), "b1");
    }

    #[test]
    fn random_diagrams_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let b = random_diagram(&mut rng, 5, 3, 3);
            assert!(b.validate().is_empty());
        }
        let c = random_cuts(&mut rng, 6);
        assert_eq!(*c.last().unwrap(), 6);
    }

    #[test]
    fn broken_has_fixed_point() {
        assert!(detect_periodic(&broken_system(4), 1).is_some());
    }

    #[test]
    fn odometer_with_base_point() {
        let s = odometer_system_at(6, 63);
        assert!(s.validate().is_empty());
        assert_eq!(s.xmin(6).cells.iter().copied().collect::<Vec<_>>(), vec![0]);
        let t = odometer_system_at(6, 10);
        assert_eq!(t.xmin(6).cells.iter().copied().collect::<Vec<_>>(), vec![11]);
    }

    #[test]
    fn nonsemisat_space_shape() {
        let s = nonsemisat_space(4);
        assert_eq!(s.cell_count(4), 10);
        assert_eq!(s.cell_name(3, 4), "1/3:1");
        assert_eq!(s.parent(4, 6), tail_cell(3, 1));
        assert_eq!(s.parent(4, tail_cell(4, 2)), tail_cell(3, 2));
        let p = s.point_by_names(&["T1:2"], "stay").unwrap();
        assert_eq!(s.cell_name(4, s.resolve(&p).unwrap()), "T4:2");
    }

    #[test]
    fn repaired_system_is_bratteli() {
        use crate::pds::{check_axiom_backward, check_axiom_forward};
        let s = nonsemisat_bratteli(10);
        assert!(s.validate().is_empty());
        let u = s.xmin(2);
        assert!(check_axiom_forward(&s, &u, 100).unwrap().is_satisfied());
        let v = s.xmax(2);
        assert!(check_axiom_backward(&s, &v, 100).unwrap().is_satisfied());
        assert!(detect_periodic(&s, 64).is_none());
    }

    #[test]
    fn catalog_builds_everything() {
        for (name, _) in CATALOG {
            assert!(build(name, 5, None).is_ok(), "{name}");
        }
        assert_eq!(build("nope", 5, None).unwrap_err(), Error::UnknownName("nope".into()));
        let Builtin::Diagram(b) = build("dyadic_diagram", 3, None).unwrap() else { panic!() };
        assert_eq!(crate::versik::enumerate_paths(&b, 3).len(), 8);
    }

    #[test]
    fn two_odometers_has_two_extremes() {
        let s = two_odometers_system(5);
        assert!(s.validate().is_empty());
        assert_eq!(s.xmax(5).len(), 2);
        assert!(detect_periodic(&s, 64).is_none());
    }
}
