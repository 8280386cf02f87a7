//! Driving the command-line frontend in-process.

use vershik_lab::cli::{execute, Outcome};

fn main() {
    for line in [
        "successor --diagram builtin:dyadic_diagram --depth 3 --path 1,1,0",
        "check-bs --system builtin:odometer_system --depth 6",
        "check-semisat --nested builtin:nonsemisat_nested --depth 10",
    ] {
        let argv: Vec<String> = line.split_whitespace().map(String::from).collect();
        if let Outcome::Report(r, _) = execute(&argv) {
            println!("$ vershik-lab {line}\n{}", r.to_text());
        }
    }
}
