//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vershik_lab::bratteli::{dyadic, order_equivalent_bounded, replay_witness, two_extremes, EquivalenceVerdict, OrderedBratteliDiagram};
use vershik_lab::builtins::{
    broken_system, dh_nested, nonsemisat_bratteli, nonsemisat_nested, odometer_system, odometer_system_at, random_cuts,
    random_diagram, two_odometers_system,
};
use vershik_lab::kr::{build_towers, check_properties, extract_diagram, verify_conjugacy, Chain, ConjugacyVerdict};
use vershik_lab::nested::{
    check_afnest, continuity_diagnostic, relation_equality, semisaturation_check, AfnestVerdict, ContinuityVerdict,
    SemisatVerdict,
};
use vershik_lab::pds::{axiom_equivalence_probe, detect_periodic, BratteliSystem};
use vershik_lab::space::ClopenSet;
use vershik_lab::versik::{
    counting_cocycle, end_vertex, enumerate_paths, extreme_path_to, is_maximal, path_space, rank_in_fiber, successor,
    CocycleValue, FinitePath, PathPoint, Step, Tail,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Little-endian binary increment with carry.
fn binary_increment(bits: &[usize]) -> Option<Vec<usize>> {
    let mut out = bits.to_vec();
    for b in out.iter_mut() {
        if *b == 0 {
            *b = 1;
            return Some(out);
        }
        *b = 0;
    }
    None
}

fn ranks(b: &OrderedBratteliDiagram, p: &FinitePath) -> Vec<usize> {
    p.edges.iter().enumerate().map(|(k, &e)| b.edge_level(k + 1).unwrap().rank(e)).collect()
}

fn criterion_1() -> Outcome {
    let b = dyadic(12);
    let start = Instant::now();
    let mut checked = 0;
    for p in enumerate_paths(&b, 12) {
        let bits = ranks(&b, &p);
        match (binary_increment(&bits), successor(&b, &p)) {
            (Some(want), Step::Path(q)) => {
                ensure(ranks(&b, &q) == want, format!("successor of {bits:?} is {:?}", ranks(&b, &q)))?;
                checked += 1;
            }
            (None, Step::NeedDeeper) => ensure(is_maximal(&b, &p), "undefined successor on a non-maximal path")?,
            (want, got) => return Err(format!("{bits:?}: oracle {want:?}, successor {got:?}")),
        }
    }
    let took = start.elapsed();
    ensure(checked == 4095, format!("{checked} non-maximal paths"))?;
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("{checked} paths agree with binary increment in {took:?}"))
}

fn criterion_2() -> Outcome {
    let s = odometer_system(10);
    let kr = build_towers(&s, &ClopenSet::new(1, [0])).map_err(|e| e.to_string())?;
    ensure(kr.towers.len() == 1, format!("{} towers", kr.towers.len()))?;
    let t = &kr.towers[0];
    ensure(t.height == 1, format!("height {}", t.height))?;
    ensure(
        t.floors[0].same_set(&ClopenSet::new(1, [0]), &s.space) && t.floors[1].same_set(&ClopenSet::new(1, [1]), &s.space),
        "floors are not [0], [1]",
    )?;
    let problems = check_properties(&s, &kr).map_err(|e| e.to_string())?;
    ensure(problems.is_empty(), format!("properties: {problems:?}"))?;
    let chain = Chain::minimal_cylinders(&s, 10, 0).map_err(|e| e.to_string())?;
    ensure(
        chain.y.iter().enumerate().all(|(i, y)| y.same_set(&ClopenSet::new(i + 1, [0]), &s.space)),
        "chain is not [0^n]",
    )?;
    let ex = extract_diagram(&s, &chain).map_err(|e| e.to_string())?;
    for n in 1..=10 {
        let got = enumerate_paths(&ex.diagram, n).len();
        ensure(got == 1 << n, format!("level {n}: {got} paths"))?;
    }
    Ok("one tower {[0],[1]}, properties hold, 2^n paths for n <= 10".into())
}

fn verified(s: &BratteliSystem, stages: usize, offset: usize) -> Result<usize, String> {
    let chain = Chain::minimal_cylinders(s, stages, offset).map_err(|e| e.to_string())?;
    let ex = extract_diagram(s, &chain).map_err(|e| e.to_string())?;
    match verify_conjugacy(s, &ex, &ex.diagram, stages).map_err(|e| e.to_string())? {
        ConjugacyVerdict::Verified { depth, pairs } if depth == stages => Ok(pairs),
        other => Err(format!("{other:?}")),
    }
}

fn criterion_3() -> Outcome {
    let odo = odometer_system(9);
    let rep = nonsemisat_bratteli(9);
    let a = verified(&odo, 8, 0)?;
    let b = verified(&odo, 8, 1)?;
    let c = verified(&rep, 8, 0)?;
    let d = verified(&rep, 8, 1)?;
    Ok(format!("depth 8 verified: odometer chains ({a}, {b} pairs), repaired system chains ({c}, {d} pairs)"))
}

fn criterion_4() -> Outcome {
    let n = dh_nested(8, 16, 0);
    let ContinuityVerdict::Discontinuity(ws) = continuity_diagnostic(&n, 8) else {
        return Err("no discontinuity".into());
    };
    // x^2 is the deep cell 11111110 (x_{-2}) and x_{-1} is 11111111.
    let w = ws
        .iter()
        .find(|w| w.first == "11111110" && w.second == "11111111")
        .ok_or("no witness at x_{-2}, x_{-1}")?;
    ensure((w.first_value, w.second_value) == (2, 1), format!("values {} and {}", w.first_value, w.second_value))?;
    let big = dh_nested(10, 16, 0);
    let found = check_afnest(&big, &ClopenSet::new(3, [7]), &ClopenSet::new(3, [0]), 6).map_err(|e| e.to_string())?;
    let AfnestVerdict::Found(af) = found else {
        return Err("AF search found nothing".into());
    };
    ensure(af.level == 3, format!("certificate at level {}", af.level))?;
    Ok(format!("cocycle values 2 and 1 on cell {}; AF certificate at k = 3 with towers {:?}", w.cell, af.towers))
}

fn criterion_5() -> Outcome {
    let n = nonsemisat_nested(12);
    let SemisatVerdict::FailsWithWitness(w) = semisaturation_check(&n, 12).map_err(|e| e.to_string())? else {
        return Err("no failure witness".into());
    };
    let cells: BTreeSet<&str> = [w.first_image_cell.as_str(), w.second_image_cell.as_str()].into();
    ensure(cells == ["T1:1", "T1:2"].into(), format!("image cells {cells:?}"))?;
    let sys = nonsemisat_bratteli(12);
    let rel = relation_equality(&n, &sys, 10);
    ensure(rel.len() == 10, format!("{} levels compared", rel.len()))?;
    ensure(rel.iter().all(|r| r.1), format!("relations differ at {:?}", rel.iter().filter(|r| !r.1).collect::<Vec<_>>()))?;
    Ok(format!("images separate into {cells:?} toward (0,1), (0,2); relations equal on levels 1..=10"))
}

fn criterion_6() -> Outcome {
    let systems = [odometer_system(8), odometer_system_at(8, 37), two_odometers_system(8), nonsemisat_bratteli(8)];
    let mut rows = 0;
    for (i, s) in systems.iter().enumerate() {
        let bound = s.space.cell_count(s.depth());
        let probe = axiom_equivalence_probe(s, 50, bound, i as u64).map_err(|e| e.to_string())?;
        ensure(probe.disagreements().is_empty(), format!("system {i}: {} disagreements", probe.disagreements().len()))?;
        rows += probe.rows.len();
    }
    ensure(rows >= 50, format!("only {rows} samples"))?;
    Ok(format!("{rows} sampled sets, zero disagreements"))
}

fn criterion_7() -> Outcome {
    for (name, s) in [
        ("odometer", odometer_system(8)),
        ("odometer at 37", odometer_system_at(8, 37)),
        ("two odometers", two_odometers_system(8)),
        ("repaired", nonsemisat_bratteli(8)),
    ] {
        let bound = s.space.cell_count(s.depth());
        ensure(detect_periodic(&s, bound).is_none(), format!("{name} has a periodic cell"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let levels = rng.gen_range(2..=8);
        let b = random_diagram(&mut rng, levels, 3, 3);
        let ps = path_space(&b, levels).map_err(|e| e.to_string())?;
        let s = BratteliSystem::new(ps.space, ps.phi).map_err(|e| format!("diagram {i}: {e}"))?;
        let bound = s.space.cell_count(s.depth());
        ensure(detect_periodic(&s, bound).is_none(), format!("random diagram {i} has a periodic cell"))?;
    }
    let broken = broken_system(6);
    let w = detect_periodic(&broken, 64).ok_or("mutant has no witness")?;
    Ok(format!("no periodic cells on built-ins and 100 random diagrams; mutant witness {} (period {})", w.cell, w.period))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut replayed = 0;
    for i in 0..20 {
        let levels = rng.gen_range(3..=6);
        let b = random_diagram(&mut rng, levels + 2, 3, 2);
        let cuts = random_cuts(&mut rng, levels);
        let t = b.telescope(&cuts).map_err(|e| e.to_string())?;
        match order_equivalent_bounded(&b, &t, 4) {
            EquivalenceVerdict::Equivalent(w) => {
                let n = replay_witness(&b, &t, &w).map_err(|e| format!("diagram {i}: replay failed: {e}"))?;
                ensure(n > 0, format!("diagram {i}: witness replays no condition"))?;
                replayed += n;
            }
            other => return Err(format!("diagram {i} with cuts {cuts:?}: {}", other.label())),
        }
    }
    match order_equivalent_bounded(&dyadic(6), &two_extremes(6), 4) {
        EquivalenceVerdict::Inequivalent(why) => Ok(format!("20 telescopes equivalent, {replayed} intertwining conditions replayed; mismatch pair: {why}")),
        other => Err(format!("mismatch pair: {}", other.label())),
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let diagrams = [dyadic(10), two_extremes(10)];
    let mut triples = 0;
    while triples < 1000 {
        let b = &diagrams[triples % 2];
        let depth = rng.gen_range(1..=10);
        let paths = enumerate_paths(b, depth);
        let x = &paths[rng.gen_range(0..paths.len())];
        let same: Vec<&FinitePath> = paths.iter().filter(|p| end_vertex(b, p) == end_vertex(b, x)).collect();
        let y = same[rng.gen_range(0..same.len())];
        let z = same[rng.gen_range(0..same.len())];
        let pt = |p: &FinitePath| PathPoint::new(p.clone(), Tail::Max);
        let d = |a: &FinitePath, c: &FinitePath| match counting_cocycle(b, &pt(a), &pt(c), depth) {
            Ok(CocycleValue::Value(v)) => Ok(v),
            other => Err(format!("not cofinal: {other:?}")),
        };
        let (xy, yz, xz) = (d(x, y)?, d(y, z)?, d(x, z)?);
        ensure(xy + yz == xz, format!("{xy} + {yz} != {xz}"))?;
        triples += 1;
    }
    let mut counted = 0;
    for b in &diagrams {
        for n in 1..=10 {
            for v in 0..b.vertex_count(n).unwrap() {
                let mut p = extreme_path_to(b, n, v, false);
                let mut k = 0u128;
                loop {
                    ensure(rank_in_fiber(b, &p) == k, format!("level {n}, vertex {v}: rank differs at step {k}"))?;
                    counted += 1;
                    match successor(b, &p) {
                        Step::Path(q) if end_vertex(b, &q) == v => {
                            p = q;
                            k += 1;
                        }
                        _ => break,
                    }
                }
            }
        }
    }
    Ok(format!("{triples} triples additive; rank matches successor count on {counted} paths"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("odometer successor equals binary increment", criterion_1),
        ("Kakutani-Rohlin towers and extraction", criterion_2),
        ("extracted diagrams are conjugate", criterion_3),
        ("shrinking-domain odometer powers", criterion_4),
        ("two-limit-point nested sequence", criterion_5),
        ("forward and backward axioms agree", criterion_6),
        ("no periodic points", criterion_7),
        ("order equivalence of telescopes", criterion_8),
        ("counting cocycle algebra", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
