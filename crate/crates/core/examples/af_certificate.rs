//! Searching restrictions Y, Z of a nested sequence on which the Phi map has
//! finitely many finite towers.

use vershik_lab::builtins::dh_nested;
use vershik_lab::nested::{check_afnest, AfnestVerdict};

fn main() {
    let n = dh_nested(10, 16, 0);
    for k in 1..=4 {
        let u = n.xmin(k).canonical(&n.space);
        let v = n.xmax(k).canonical(&n.space);
        match check_afnest(&n, &u, &v, 6).expect("search") {
            AfnestVerdict::Found(w) => println!(
                "U = {:?}, V = {:?}: Y = {:?}, Z = {:?}, M = {}, towers {:?}",
                u.names(&n.space), v.names(&n.space), w.y.names(&n.space), w.z.names(&n.space), w.m, w.towers
            ),
            AfnestVerdict::NotFound { depth } => println!("k = {k}: nothing up to level {depth}"),
        }
    }
}
