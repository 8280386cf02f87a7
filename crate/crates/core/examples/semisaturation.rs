//! A nested sequence on a space with two limit points admits no
//! semi-saturation: nearby points have images that stay apart. Its orbit
//! relation still equals that of a repaired Bratteli system.

use vershik_lab::builtins::{dh_nested, nonsemisat_bratteli, nonsemisat_nested};
use vershik_lab::nested::{relation_equality, semisaturation_check, SemisatVerdict};

fn main() {
    let n = nonsemisat_nested(12);
    match semisaturation_check(&n, 12).expect("check") {
        SemisatVerdict::FailsWithWitness(w) => println!(
            "fails near {}: {} -> {} in {}, {} -> {} in {} (apart from level {})",
            w.point, w.first, w.first_image, w.first_image_cell, w.second, w.second_image, w.second_image_cell,
            w.separation_level
        ),
        other => println!("{other:?}"),
    }
    let rel = relation_equality(&n, &nonsemisat_bratteli(12), 10);
    println!("relations agree on levels: {:?}", rel.iter().filter(|r| r.1).map(|r| r.0).collect::<Vec<_>>());

    if let SemisatVerdict::Admits(ext) = semisaturation_check(&dh_nested(8, 16, 0), 8).expect("check") {
        println!("odometer powers admit an extension at {} points", ext.len());
    }
}
