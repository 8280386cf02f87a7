//! First-return towers over a clopen base and the ordered diagram read off
//! a nested chain of tower partitions.

use vershik_lab::builtins::odometer_system;
use vershik_lab::kr::{build_towers, check_properties, extract_diagram, verify_conjugacy, Chain};
use vershik_lab::space::ClopenSet;
use vershik_lab::versik::enumerate_paths;

fn main() {
    let s = odometer_system(8);
    let base = ClopenSet::new(2, [0]);
    let kr = build_towers(&s, &base).expect("towers");
    for t in &kr.towers {
        let floors: Vec<Vec<String>> = t.floors.iter().map(|f| f.names(&s.space)).collect();
        println!("tower of height {}: {floors:?}", t.height);
    }
    println!("property violations: {:?}", check_properties(&s, &kr).expect("checkable"));

    let chain = Chain::minimal_cylinders(&s, 6, 0).expect("chain");
    let ex = extract_diagram(&s, &chain).expect("extraction");
    for n in 1..=6 {
        println!("level {n}: {} paths", enumerate_paths(&ex.diagram, n).len());
    }
    println!("{:?}", verify_conjugacy(&s, &ex, &ex.diagram, 6).expect("verification"));
}
