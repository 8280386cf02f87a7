//! Writing built-ins as text files and reading them back.

use vershik_lab::builtins::{dh_nested, odometer_system};
use vershik_lab::bratteli::dyadic;
use vershik_lab::format::{emit_diagram, emit_nested, emit_system, parse_diagram, parse_nested, parse_system};

fn main() {
    let b = dyadic(2);
    let text = emit_diagram(&b);
    print!("{text}");
    assert_eq!(parse_diagram(&text).expect("parses"), b);

    let s = odometer_system(2);
    let text = emit_system(&s);
    print!("{text}");
    assert_eq!(parse_system(&text).expect("parses").phi, s.phi);

    let n = dh_nested(3, 3, 0);
    let text = emit_nested(&n);
    println!("nested file: {} lines", text.lines().count());
    assert_eq!(parse_nested(&text).expect("parses").maps, n.maps);
}
