//! Telescoping a diagram and certifying order equivalence with a replayed
//! intertwining witness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vershik_lab::bratteli::{dyadic, order_equivalent_bounded, replay_witness, two_extremes, EquivalenceVerdict};
use vershik_lab::builtins::random_diagram;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = random_diagram(&mut rng, 6, 3, 2);
    let t = b.telescope(&[2, 3, 5]).expect("cuts within range");
    match order_equivalent_bounded(&b, &t, 4) {
        EquivalenceVerdict::Equivalent(w) => {
            let n = replay_witness(&b, &t, &w).expect("witness replays");
            println!("equivalent: cuts {:?}, g = {:?}, h = {:?}, {n} conditions replayed", w.cuts, w.g, w.h);
        }
        other => println!("{}", other.label()),
    }
    if let EquivalenceVerdict::Inequivalent(why) = order_equivalent_bounded(&dyadic(5), &two_extremes(5), 4) {
        println!("dyadic vs two-extremes: inequivalent ({why})");
    }
}
