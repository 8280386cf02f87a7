//! The Versik map on the stationary 2-adic diagram is the adding machine:
//! walk the successor orbit of the minimal depth-4 path.

use vershik_lab::bratteli::dyadic;
use vershik_lab::cli::show_path;
use vershik_lab::versik::{extreme_path_to, successor, Step};

fn main() {
    let b = dyadic(4);
    let mut p = extreme_path_to(&b, 4, 0, false);
    println!("{}", show_path(&b, &p));
    while let Step::Path(q) = successor(&b, &p) {
        println!("{}", show_path(&b, &q));
        p = q;
    }
    println!("maximal path reached; the successor needs a deeper prefix");
}
