//! Forward and backward covering axioms, their sampled equivalence and the
//! search for periodic cells, on a good system and a broken one.

use vershik_lab::builtins::{broken_system, nonsemisat_bratteli};
use vershik_lab::pds::{axiom_equivalence_probe, check_axiom_backward, check_axiom_forward, detect_periodic};

fn main() {
    for (name, s) in [("repaired two-limit-point system", nonsemisat_bratteli(8)), ("broken system", broken_system(6))] {
        let bound = s.space.cell_count(s.depth());
        let fwd = check_axiom_forward(&s, &s.xmin(1), bound).expect("forward");
        let bwd = check_axiom_backward(&s, &s.xmax(1), bound).expect("backward");
        let probe = axiom_equivalence_probe(&s, 40, bound, 0).expect("probe");
        println!("{name}");
        println!("  forward {fwd:?}, backward {bwd:?}");
        println!("  {} samples, {} disagreements", probe.rows.len(), probe.disagreements().len());
        println!("  periodic: {:?}", detect_periodic(&s, bound));
    }
}
