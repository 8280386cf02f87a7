use std::path::Path;
use std::process::{Command, Output};

use vershik_lab::builtins::{build, Builtin};
use vershik_lab::cli::Report;
use vershik_lab::format::{parse_any, InputFile};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vershik-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("VERSHIK_LAB_DEPTH")
        .output()
        .expect("binary runs")
}

fn code(dir: &Path, args: &str) -> i32 {
    run_in(dir, &args.split_whitespace().collect::<Vec<_>>()).status.code().expect("exit code")
}

fn json(dir: &Path, args: &str) -> Report {
    let mut a: Vec<&str> = args.split_whitespace().collect();
    a.extend(["--format", "json"]);
    let out = run_in(dir, &a);
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn emit(dir: &Path, name: &str, depth: usize, file: &str) {
    let args = format!("examples emit {name} --depth {depth} --out {file}");
    assert_eq!(code(dir, &args), 0, "{args}");
}

#[test]
fn exit_code_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    emit(d, "dyadic_diagram", 6, "dyadic.bd");
    emit(d, "two_extremes_diagram", 6, "two.bd");
    emit(d, "dh_nested", 8, "dh.ns");
    emit(d, "nonsemisat_nested", 10, "ns.ns");
    emit(d, "nonsemisat_bratteli", 8, "nb.sys");
    emit(d, "broken_system", 6, "broken.sys");
    std::fs::write(d.join("garbage.bd"), "diagram\nvertex 0 r\nedge 1 r x 0\n").unwrap();
    assert_eq!(code(d, "telescope --diagram two.bd --cuts 2,3 --out t2.bd"), 0);

    let matrix: &[(&str, i32)] = &[
        ("validate-diagram --diagram dyadic.bd", 0),
        ("successor --diagram dyadic.bd --path 1,1,0", 0),
        ("successor --diagram dyadic.bd --path 1,1,1", 1),
        ("successor --diagram dyadic.bd --path 0,0,0 --backward", 1),
        ("orbit --diagram dyadic.bd --path 0,0 --steps 5", 0),
        ("equiv --diagram dyadic.bd --other two.bd", 1),
        ("equiv --diagram t2.bd --other dyadic.bd", 2),
        ("check-bs --system nb.sys", 0),
        ("check-bs --system broken.sys", 1),
        ("extract-diagram --system nb.sys --stages 6 --out x.bd", 0),
        ("verify-conjugacy --system nb.sys --stages 6 --offset 1", 0),
        ("check-afnest --nested builtin:dh_nested --depth 10", 0),
        ("check-afnest --nested ns.ns --depth 8", 2),
        ("diagnose-cocycle --nested dh.ns --depth 8", 1),
        ("diagnose-cocycle --nested builtin:two_max_nested --depth 6", 0),
        ("check-semisat --nested ns.ns", 1),
        ("check-semisat --nested dh.ns --depth 6", 0),
        ("diagnose --nested dh.ns --depth 8", 1),
        ("export-dot --diagram dyadic.bd --depth 3 --out d.dot", 0),
        ("examples list", 0),
        ("successor --diagram missing.bd --path 0", 3),
        ("validate-diagram --diagram garbage.bd", 3),
        ("examples emit no_such_builtin", 3),
        ("check-bs --system dyadic.bd", 3),
        ("frobnicate", 3),
        ("successor --diagram dyadic.bd", 3),
    ];
    for (args, want) in matrix {
        assert_eq!(code(d, args), *want, "{args}");
    }
    assert!(std::fs::read_to_string(d.join("d.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn successor_prints_the_incremented_path() {
    let tmp = tempfile::tempdir().unwrap();
    emit(tmp.path(), "dyadic_diagram", 4, "dyadic.bd");
    let r = json(tmp.path(), "successor --diagram dyadic.bd --path 1,1,0");
    assert_eq!(r.details["successor"], "0,0,1");
    let out = run_in(tmp.path(), &["successor", "--diagram", "dyadic.bd", "--path", "1,1,0"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("successor: 0,0,1"));
}

#[test]
fn cocycle_report_has_values_two_and_one() {
    let tmp = tempfile::tempdir().unwrap();
    emit(tmp.path(), "dh_nested", 8, "dh.ns");
    let r = json(tmp.path(), "diagnose-cocycle --nested dh.ns --depth 8");
    assert_eq!(r.verdict, "Discontinuity");
    assert_eq!(r.details["values"], serde_json::json!([2, 1]));
}

#[test]
fn telescope_is_equivalent_to_its_source() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    emit(d, "dyadic_diagram", 6, "dyadic.bd");
    assert_eq!(code(d, "telescope --diagram dyadic.bd --cuts 2,4 --out t.bd"), 0);
    let r = json(d, "equiv --diagram dyadic.bd --other t.bd");
    assert_eq!(r.verdict, "Equivalent");
    assert_eq!(r.exit_code, 0);
}

#[test]
fn reports_replay_and_tampering_is_caught() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    emit(d, "dyadic_diagram", 6, "dyadic.bd");
    emit(d, "dh_nested", 8, "dh.ns");
    emit(d, "nonsemisat_nested", 10, "ns.ns");
    assert_eq!(code(d, "telescope --diagram dyadic.bd --cuts 1,3 --out t.bd"), 0);
    for (file, args) in [
        ("eq.json", "equiv --diagram dyadic.bd --other t.bd"),
        ("dc.json", "diagnose-cocycle --nested dh.ns --depth 8"),
        ("ss.json", "check-semisat --nested ns.ns"),
        ("bs.json", "check-bs --system builtin:odometer_system --depth 6 --seed 3"),
    ] {
        let r = json(d, args);
        std::fs::write(d.join(file), serde_json::to_string(&r).unwrap()).unwrap();
        let again = json(d, &format!("replay --report {file}"));
        assert_eq!(again.verdict, "Replayed", "{args}: {:?}", again.details);
        assert_eq!(again.exit_code, 0);
    }
    let mut r: Report = serde_json::from_str(&std::fs::read_to_string(d.join("dc.json")).unwrap()).unwrap();
    r.witness.as_mut().unwrap()[0]["first_value"] = serde_json::json!(5);
    std::fs::write(d.join("bad.json"), serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(code(d, "replay --report bad.json"), 1);
    assert_eq!(code(d, "replay --report nowhere.json"), 3);
}

#[test]
fn emitted_examples_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["dyadic_diagram", "odometer_system", "nonsemisat_bratteli", "dh_nested", "nonsemisat_nested"] {
        let file = format!("{name}.txt");
        emit(tmp.path(), name, 5, &file);
        let text = std::fs::read_to_string(tmp.path().join(&file)).unwrap();
        match (parse_any(&text).unwrap(), build(name, 5, None).unwrap()) {
            (InputFile::Diagram(a), Builtin::Diagram(b)) => assert_eq!(a, b),
            (InputFile::System(a), Builtin::System(b)) => assert_eq!((a.space, a.phi), (b.space, b.phi)),
            (InputFile::Nested(a), Builtin::Nested(b)) => assert_eq!((a.space, a.maps, a.beyond), (b.space, b.maps, b.beyond)),
            _ => panic!("{name}: kind changed"),
        }
    }
}

#[test]
fn depth_defaults_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vershik-lab"))
        .args(["examples", "emit", "dyadic_diagram", "--format", "json"])
        .env("VERSHIK_LAB_DEPTH", "5")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    let r: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.params["depth"], 5);
}
