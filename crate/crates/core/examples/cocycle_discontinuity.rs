//! Odometer powers with shrinking domains: the counting cocycle takes two
//! values on points of one small cell, and the witness replays.

use vershik_lab::builtins::dh_nested;
use vershik_lab::nested::{continuity_diagnostic, replay_discontinuity, validate_nested, ContinuityVerdict};

fn main() {
    let n = dh_nested(8, 16, 0);
    println!("nesting violations: {}", validate_nested(&n).len());
    println!("X_max = {:?}, X_min = {:?}", n.xmax_deep(), n.xmin_deep());
    match continuity_diagnostic(&n, 8) {
        ContinuityVerdict::Discontinuity(ws) => {
            for w in ws.iter().take(3) {
                println!(
                    "n = {}: cell {} holds {} (value {}) and {} (value {}); replays: {}",
                    w.n, w.cell, w.first, w.first_value, w.second, w.second_value,
                    replay_discontinuity(&n, w)
                );
            }
            println!("{} witnesses in total", ws.len());
        }
        ContinuityVerdict::ContinuousUpTo(l) => println!("continuous up to level {l}"),
    }
}
