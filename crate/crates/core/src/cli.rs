//! Command-line frontend. Every subcommand produces a [`Report`]; the exit
//! code is 0 when the checked property holds, 1 when a violation or witness
//! was found, 2 when the answer is unknown at the resolution used and 3 on
//! input errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bratteli::{contraction_witness, order_equivalent_bounded, replay_witness, EquivalenceVerdict, OrderedBratteliDiagram};
use crate::builtins::{build, Builtin, CATALOG};
use crate::error::{Error, Result};
use crate::format::{emit_diagram, emit_nested, emit_system, parse_any, InputFile};
use crate::kr::{extract_diagram, verify_conjugacy, Chain, ConjugacyVerdict};
use crate::nested::{
    check_afnest, check_lemma_conditions, continuity_diagnostic, replay_discontinuity, semisaturation_check, validate_nested,
    AfnestVerdict, ContinuityVerdict, DiscontinuityWitness, NestedSequence, SemisatVerdict, SemisatWitness, Side,
};
use crate::pds::{axiom_equivalence_probe, check_axiom_backward, check_axiom_forward, detect_periodic, BratteliSystem};
use crate::space::ClopenSet;
use crate::versik::{is_maximal, is_minimal, parse_path, path_literal, predecessor, successor, FinitePath, Step};

/// Environment variable holding the default `--depth`.
pub const DEPTH_ENV: &str = "VERSHIK_LAB_DEPTH";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "vershik-lab", version, about = "Bratteli diagrams, Versik maps and nested partial homeomorphisms")]
pub struct Cli {
    /// Resolution cap for every check.
    #[arg(long, global = true, env = DEPTH_ENV, default_value_t = 12)]
    pub depth: usize,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Seed for sampled checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

/// Inputs are input files or `builtin:<name>`.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the ordering and well-formedness of a diagram.
    ValidateDiagram {
        #[arg(long)]
        diagram: String,
    },
    /// Successor (or predecessor) of a finite path.
    Successor {
        #[arg(long)]
        diagram: String,
        #[arg(long)]
        path: String,
        #[arg(long)]
        backward: bool,
    },
    /// Iterate the successor from a path.
    Orbit {
        #[arg(long)]
        diagram: String,
        #[arg(long)]
        path: String,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long)]
        backward: bool,
    },
    /// Telescope a diagram along comma-separated cut levels.
    Telescope {
        #[arg(long)]
        diagram: String,
        #[arg(long)]
        cuts: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bounded order-equivalence test.
    Equiv {
        #[arg(long)]
        diagram: String,
        #[arg(long)]
        other: String,
        #[arg(long, default_value_t = 4)]
        bound: usize,
    },
    /// Bratteli-system axioms, their equivalence probe and periodic points.
    CheckBs {
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Level of the neighbourhoods of X_min and X_max.
        #[arg(long, default_value_t = 1)]
        level: usize,
    },
    /// Build the ordered diagram of a system from nested Kakutani-Rohlin towers.
    ExtractDiagram {
        #[arg(long)]
        system: String,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the path-space conjugacy of an extraction.
    VerifyConjugacy {
        #[arg(long)]
        system: String,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        /// Diagram to check instead of the extracted one.
        #[arg(long)]
        diagram: Option<String>,
    },
    /// Search for an AF certificate of a nested sequence.
    CheckAfnest {
        #[arg(long)]
        nested: String,
        #[arg(long, default_value_t = 3)]
        level: usize,
        /// Comma-separated cell names of U (default: cylinder of X_min).
        #[arg(long)]
        u: Option<String>,
        /// Comma-separated cell names of V (default: cylinder of X_max).
        #[arg(long)]
        v: Option<String>,
    },
    /// Look for discontinuities of the counting cocycle.
    DiagnoseCocycle {
        #[arg(long)]
        nested: String,
    },
    /// Semi-saturation check of a nested sequence.
    CheckSemisat {
        #[arg(long)]
        nested: String,
    },
    /// All nested-sequence checks at once.
    Diagnose {
        #[arg(long)]
        nested: String,
    },
    /// Built-in instances.
    Examples {
        #[command(subcommand)]
        action: ExamplesAction,
    },
    /// Graphviz rendering of a diagram.
    ExportDot {
        #[arg(long)]
        diagram: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a JSON report and re-verify its witnesses.
    Replay {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExamplesAction {
    List,
    Emit {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Structured result of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub argv: Vec<String>,
    pub verdict: String,
    pub exit_code: i32,
    pub params: BTreeMap<String, Value>,
    pub details: BTreeMap<String, Value>,
    pub witness: Option<Value>,
    /// File contents produced by emitting subcommands.
    pub output: Option<String>,
}

impl Report {
    fn new(command: &str, argv: &[String]) -> Report {
        Report {
            command: command.to_string(),
            argv: argv.to_vec(),
            verdict: String::new(),
            exit_code: EXIT_OK,
            params: BTreeMap::new(),
            details: BTreeMap::new(),
            witness: None,
            output: None,
        }
    }

    fn verdict(&mut self, v: &str, code: i32) {
        self.verdict = v.to_string();
        self.exit_code = code;
    }

    fn detail(&mut self, k: &str, v: impl Serialize) {
        self.details.insert(k.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn param(&mut self, k: &str, v: impl Serialize) {
        self.params.insert(k.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn witness(&mut self, v: impl Serialize) {
        self.witness = serde_json::to_value(v).ok();
    }

    /// Human-readable summary lines.
    pub fn to_text(&self) -> String {
        let show = |v: &Value| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let mut s = format!("command: {}\nverdict: {}\nexit: {}\n", self.command, self.verdict, self.exit_code);
        for (k, v) in &self.details {
            s += &format!("{k}: {}\n", show(v));
        }
        if let Some(w) = &self.witness {
            s += &format!("witness: {w}\n");
        }
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={}", show(v))).collect();
        s += &format!("params: {}\n", params.join(" "));
        s
    }
}

/// Result of parsing and running a command line.
#[derive(Debug)]
pub enum Outcome {
    Report(Report, OutputFormat),
    /// Help, version or usage text with its exit code.
    Message(String, i32),
}

/// Parses `argv` (without the program name) and runs it.
pub fn execute(argv: &[String]) -> Outcome {
    let full = std::iter::once("vershik-lab".to_string()).chain(argv.iter().cloned());
    let cli = match Cli::try_parse_from(full) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            return Outcome::Message(e.render().to_string(), code);
        }
    };
    let fmt = cli.format;
    Outcome::Report(run(&cli, argv), fmt)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, argv: &[String]) -> Report {
    let name = command_name(&cli.command);
    let mut r = Report::new(name, argv);
    r.param("depth", cli.depth);
    r.param("seed", cli.seed);
    if let Err(e) = dispatch(cli, &mut r) {
        let code = match e {
            Error::ResolutionExhausted { .. } => EXIT_UNKNOWN,
            _ => EXIT_INPUT,
        };
        r.verdict(if code == EXIT_UNKNOWN { "Unknown" } else { "InputError" }, code);
        r.detail("error", e.to_string());
    }
    r
}

/// Entry point of the binary: prints and returns the exit code. When a
/// subcommand produced a file and no `--out` was given, the file goes to
/// stdout and the text summary to stderr.
pub fn main_with_args(argv: &[String]) -> i32 {
    match execute(argv) {
        Outcome::Message(m, code) => {
            if code == EXIT_OK {
                print!("{m}");
            } else {
                eprint!("{m}");
            }
            code
        }
        Outcome::Report(r, OutputFormat::Json) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("reports serialize"));
            r.exit_code
        }
        Outcome::Report(r, OutputFormat::Text) => {
            match &r.output {
                Some(out) => {
                    print!("{out}");
                    eprint!("{}", r.to_text());
                }
                None => print!("{}", r.to_text()),
            }
            r.exit_code
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::ValidateDiagram { .. } => "validate-diagram",
        Command::Successor { .. } => "successor",
        Command::Orbit { .. } => "orbit",
        Command::Telescope { .. } => "telescope",
        Command::Equiv { .. } => "equiv",
        Command::CheckBs { .. } => "check-bs",
        Command::ExtractDiagram { .. } => "extract-diagram",
        Command::VerifyConjugacy { .. } => "verify-conjugacy",
        Command::CheckAfnest { .. } => "check-afnest",
        Command::DiagnoseCocycle { .. } => "diagnose-cocycle",
        Command::CheckSemisat { .. } => "check-semisat",
        Command::Diagnose { .. } => "diagnose",
        Command::Examples { .. } => "examples",
        Command::ExportDot { .. } => "export-dot",
        Command::Replay { .. } => "replay",
    }
}

/// Loads a input file, or a built-in given as `builtin:<name>` at `depth`.
pub fn load(input: &str, depth: usize) -> Result<InputFile> {
    if let Some(name) = input.strip_prefix("builtin:") {
        return Ok(match build(name, depth, None)? {
            Builtin::Diagram(d) => InputFile::Diagram(d),
            Builtin::System(s) => InputFile::System(s),
            Builtin::Nested(n) => InputFile::Nested(n),
        });
    }
    let text = std::fs::read_to_string(input).map_err(|e| Error::Io(format!("{input}: {e}")))?;
    parse_any(&text)
}

fn load_diagram(input: &str, depth: usize) -> Result<OrderedBratteliDiagram> {
    match load(input, depth)? {
        InputFile::Diagram(d) => Ok(d),
        _ => Err(Error::Invalid(format!("{input} is not a diagram"))),
    }
}

fn load_system(input: &str, depth: usize) -> Result<BratteliSystem> {
    match load(input, depth)? {
        InputFile::System(s) => Ok(s),
        _ => Err(Error::Invalid(format!("{input} is not a system"))),
    }
}

fn load_nested(input: &str, depth: usize) -> Result<NestedSequence> {
    match load(input, depth)? {
        InputFile::Nested(n) => Ok(n),
        _ => Err(Error::Invalid(format!("{input} is not a nested sequence"))),
    }
}

/// Path literal without the end vertex when the level has a single vertex.
pub fn show_path(b: &OrderedBratteliDiagram, p: &FinitePath) -> String {
    let lit = path_literal(b, p);
    match b.vertex_count(p.depth()) {
        Some(1) => lit.split('@').next().unwrap_or("").to_string(),
        _ => lit,
    }
}

fn write_or_attach(r: &mut Report, out: &Option<PathBuf>, text: String) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, &text)?;
            r.detail("written", path.display().to_string());
        }
        None => r.output = Some(text),
    }
    Ok(())
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Invalid(format!("bad number list `{s}`"))))
        .collect()
}

fn parse_cells(nest: &NestedSequence, level: usize, names: &str) -> Result<ClopenSet> {
    let cells = names
        .split(',')
        .map(|n| {
            nest.space
                .cell_by_name(level, n.trim())
                .ok_or_else(|| Error::UnknownName(n.trim().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClopenSet::new(level, cells))
}

fn dispatch(cli: &Cli, r: &mut Report) -> Result<()> {
    let depth = cli.depth;
    if depth < 2 {
        return Err(Error::Invalid("--depth must be at least 2".into()));
    }
    match &cli.command {
        Command::ValidateDiagram { diagram } => {
            let b = load_diagram(diagram, depth)?;
            let v = b.validate();
            r.detail("levels", b.available());
            r.detail("violations", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>());
            if v.is_empty() {
                r.verdict("Valid", EXIT_OK);
            } else {
                r.verdict("Invalid", EXIT_VIOLATION);
            }
        }
        Command::Successor { diagram, path, backward } => {
            let b = load_diagram(diagram, depth)?;
            let p = parse_path(&b, path)?;
            let step = if *backward { predecessor(&b, &p) } else { successor(&b, &p) };
            let key = if *backward { "predecessor" } else { "successor" };
            match step {
                Step::Path(q) => {
                    r.detail(key, show_path(&b, &q));
                    r.verdict("Defined", EXIT_OK);
                }
                _ => {
                    r.detail(key, "undefined");
                    r.verdict(if *backward { "Minimal" } else { "Maximal" }, EXIT_VIOLATION);
                }
            }
        }
        Command::Orbit { diagram, path, steps, backward } => {
            let b = load_diagram(diagram, depth)?;
            let mut p = parse_path(&b, path)?;
            let mut orbit = vec![show_path(&b, &p)];
            for _ in 0..*steps {
                let next = if *backward { predecessor(&b, &p) } else { successor(&b, &p) };
                match next {
                    Step::Path(q) => {
                        orbit.push(show_path(&b, &q));
                        p = q;
                    }
                    _ => break,
                }
            }
            let ended = if *backward { is_minimal(&b, &p) } else { is_maximal(&b, &p) };
            r.detail("orbit", orbit.join(" "));
            r.detail("reached_extreme", ended);
            r.verdict("Orbit", EXIT_OK);
        }
        Command::Telescope { diagram, cuts, out } => {
            let b = load_diagram(diagram, depth)?;
            let t = b.telescope(&parse_list(cuts)?)?;
            r.detail("levels", t.available());
            write_or_attach(r, out, emit_diagram(&t))?;
            r.verdict("Telescoped", EXIT_OK);
        }
        Command::Equiv { diagram, other, bound } => {
            let a = load_diagram(diagram, depth)?;
            let b = load_diagram(other, depth)?;
            let bound = (*bound).min(depth);
            r.param("bound", bound);
            match order_equivalent_bounded(&a, &b, bound) {
                EquivalenceVerdict::Equivalent(w) => {
                    let checked = replay_witness(&a, &b, &w).map_err(Error::Invalid)?;
                    r.detail("conditions_replayed", checked);
                    r.witness(json!({
                        "swapped": w.swapped, "cuts": w.cuts, "vertex_maps": w.vertex_maps, "g": w.g, "h": w.h,
                    }));
                    r.verdict("Equivalent", EXIT_OK);
                }
                EquivalenceVerdict::Inequivalent(why) => {
                    r.witness(why);
                    r.verdict("Inequivalent", EXIT_VIOLATION);
                }
                EquivalenceVerdict::Unknown { .. } => r.verdict("Unknown", EXIT_UNKNOWN),
            }
        }
        Command::CheckBs { system, samples, level } => {
            let s = load_system(system, depth)?;
            let d = s.depth();
            let lvl = (*level).clamp(1, d);
            let bound = s.space.cell_count(d);
            r.param("level", lvl);
            r.param("bound", bound);
            let problems = s.validate();
            let fwd = check_axiom_forward(&s, &s.xmin(lvl), bound)?;
            let bwd = check_axiom_backward(&s, &s.xmax(lvl), bound)?;
            let probe = axiom_equivalence_probe(&s, *samples, bound, cli.seed)?;
            r.detail("validation", &problems);
            r.detail("forward", fwd);
            r.detail("backward", bwd);
            r.detail("probe_samples", probe.rows.len());
            r.detail("probe_disagreements", probe.disagreements().len());
            if let Some(w) = detect_periodic(&s, bound) {
                r.detail("periodic", w);
            } else {
                r.detail("periodic", "none");
            }
            if problems.is_empty() && fwd.is_satisfied() && bwd.is_satisfied() {
                r.verdict("BratteliSystem", EXIT_OK);
            } else {
                r.verdict("NotBratteliSystem", EXIT_VIOLATION);
            }
        }
        Command::ExtractDiagram { system, stages, offset, out } => {
            let s = load_system(system, depth)?;
            let stages = stages.unwrap_or(s.depth().min(depth).saturating_sub(*offset));
            let ex = extract_diagram(&s, &Chain::minimal_cylinders(&s, stages, *offset)?)?;
            let v = verify_conjugacy(&s, &ex, &ex.diagram, stages.min(depth))?;
            r.param("stages", stages);
            r.param("offset", offset);
            conjugacy_verdict(r, v);
            write_or_attach(r, out, emit_diagram(&ex.diagram))?;
        }
        Command::VerifyConjugacy { system, stages, offset, diagram } => {
            let s = load_system(system, depth)?;
            let stages = stages.unwrap_or(s.depth().min(depth).saturating_sub(*offset));
            let ex = extract_diagram(&s, &Chain::minimal_cylinders(&s, stages, *offset)?)?;
            let b = match diagram {
                Some(f) => load_diagram(f, depth)?,
                None => ex.diagram.clone(),
            };
            r.param("stages", stages);
            r.param("offset", offset);
            let v = verify_conjugacy(&s, &ex, &b, stages.min(depth).min(b.available()))?;
            conjugacy_verdict(r, v);
        }
        Command::CheckAfnest { nested, level, u, v } => {
            let n = load_nested(nested, depth)?;
            let k = (*level).clamp(1, n.depth());
            let u = match u {
                Some(names) => parse_cells(&n, k, names)?,
                None => n.xmin(k).canonical(&n.space),
            };
            let v = match v {
                Some(names) => parse_cells(&n, k, names)?,
                None => n.xmax(k).canonical(&n.space),
            };
            let search = depth.min(n.depth() - 1);
            r.param("search_depth", search);
            r.detail("u", u.names(&n.space));
            r.detail("v", v.names(&n.space));
            match check_afnest(&n, &u, &v, search)? {
                AfnestVerdict::Found(w) => {
                    r.witness(json!({
                        "level": w.level, "y": w.y.names(&n.space), "z": w.z.names(&n.space),
                        "m": w.m, "towers": w.towers,
                    }));
                    r.verdict("Found", EXIT_OK);
                }
                AfnestVerdict::NotFound { depth } => {
                    r.detail("searched_to", depth);
                    r.verdict("NotFound", EXIT_UNKNOWN);
                }
            }
        }
        Command::DiagnoseCocycle { nested } => {
            let n = load_nested(nested, depth)?;
            match continuity_diagnostic(&n, depth) {
                ContinuityVerdict::ContinuousUpTo(l) => {
                    r.detail("level", l);
                    r.verdict("ContinuousUpTo", EXIT_OK);
                }
                ContinuityVerdict::Discontinuity(ws) => {
                    let first = &ws[0];
                    r.detail("values", [first.first_value, first.second_value]);
                    r.detail("witnesses", ws.len());
                    r.witness(&ws);
                    r.verdict("Discontinuity", EXIT_VIOLATION);
                }
            }
        }
        Command::CheckSemisat { nested } => {
            let n = load_nested(nested, depth)?;
            semisat_verdict(r, semisaturation_check(&n, depth)?);
        }
        Command::Diagnose { nested } => {
            let n = load_nested(nested, depth)?;
            let violations = validate_nested(&n);
            r.detail("validation", violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>());
            let lemma = check_lemma_conditions(&n);
            r.detail("lemma", &lemma);
            let k = 3.min(n.depth() - 1).max(1);
            let af = check_afnest(&n, &n.xmin(k).canonical(&n.space), &n.xmax(k).canonical(&n.space), depth.min(n.depth() - 1))?;
            r.detail("af", if af.is_found() { "Found" } else { "NotFound" });
            let cont = continuity_diagnostic(&n, depth);
            r.detail(
                "continuity",
                match &cont {
                    ContinuityVerdict::ContinuousUpTo(_) => "ContinuousUpTo".to_string(),
                    ContinuityVerdict::Discontinuity(ws) => {
                        format!("Discontinuity (values {} and {})", ws[0].first_value, ws[0].second_value)
                    }
                },
            );
            let semi = semisaturation_check(&n, depth)?;
            r.detail(
                "semisaturation",
                match &semi {
                    SemisatVerdict::Admits(_) => "Admits",
                    SemisatVerdict::FailsWithWitness(_) => "FailsWithWitness",
                    SemisatVerdict::UnknownUpTo(_) => "UnknownUpTo",
                },
            );
            let failed = !violations.is_empty()
                || matches!(cont, ContinuityVerdict::Discontinuity(_))
                || matches!(semi, SemisatVerdict::FailsWithWitness(_));
            let unknown = !af.is_found() || matches!(semi, SemisatVerdict::UnknownUpTo(_));
            match (failed, unknown) {
                (true, _) => r.verdict("Findings", EXIT_VIOLATION),
                (false, true) => r.verdict("Unknown", EXIT_UNKNOWN),
                _ => r.verdict("Clean", EXIT_OK),
            }
        }
        Command::Examples { action } => match action {
            ExamplesAction::List => {
                let list: Vec<String> = CATALOG.iter().map(|(n, d)| format!("{n:<22} {d}")).collect();
                r.detail("names", CATALOG.iter().map(|(n, _)| *n).collect::<Vec<_>>());
                r.output = Some(list.join("\n") + "\n");
                r.verdict("Listed", EXIT_OK);
            }
            ExamplesAction::Emit { name, out } => {
                let text = match build(name, depth, None)? {
                    Builtin::Diagram(d) => emit_diagram(&d),
                    Builtin::System(s) => emit_system(&s),
                    Builtin::Nested(n) => emit_nested(&n),
                };
                write_or_attach(r, out, text)?;
                r.verdict("Emitted", EXIT_OK);
            }
        },
        Command::ExportDot { diagram, out } => {
            let b = load_diagram(diagram, depth)?;
            write_or_attach(r, out, b.to_dot(depth))?;
            r.verdict("Exported", EXIT_OK);
        }
        Command::Replay { report } => replay(report, r)?,
    }
    Ok(())
}

fn conjugacy_verdict(r: &mut Report, v: ConjugacyVerdict) {
    match v {
        ConjugacyVerdict::Verified { depth, pairs } => {
            r.detail("verified_depth", depth);
            r.detail("pairs", pairs);
            r.verdict("Verified", EXIT_OK);
        }
        ConjugacyVerdict::Counterexample { path, reason } => {
            r.witness(json!({ "path": path, "reason": reason }));
            r.verdict("Counterexample", EXIT_VIOLATION);
        }
    }
}

fn semisat_verdict(r: &mut Report, v: SemisatVerdict) {
    match v {
        SemisatVerdict::Admits(ext) => {
            r.detail("extension_points", ext.len());
            r.witness(ext);
            r.verdict("Admits", EXIT_OK);
        }
        SemisatVerdict::FailsWithWitness(w) => {
            r.detail("image_cells", [&w.first_image_cell, &w.second_image_cell]);
            r.witness(&w);
            r.verdict("FailsWithWitness", EXIT_VIOLATION);
        }
        SemisatVerdict::UnknownUpTo(l) => {
            r.detail("level", l);
            r.verdict("UnknownUpTo", EXIT_UNKNOWN);
        }
    }
}

/// Value of `--<flag>` in a recorded argv.
fn flag<'a>(argv: &'a [String], name: &str) -> Option<&'a str> {
    let long = format!("--{name}");
    let eq = format!("--{name}=");
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == &long {
            argv.get(i + 1).map(String::as_str)
        } else {
            a.strip_prefix(&eq)
        }
    })
}

fn depth_of(argv: &[String]) -> usize {
    flag(argv, "depth")
        .and_then(|d| d.parse().ok())
        .or_else(|| std::env::var(DEPTH_ENV).ok().and_then(|d| d.parse().ok()))
        .unwrap_or(12)
}

/// Independent check of a recorded witness. `None` when the command has no
/// witness-specific check.
fn check_witness(orig: &Report) -> Result<Option<String>> {
    let argv = &orig.argv;
    let depth = depth_of(argv);
    let Some(w) = &orig.witness else { return Ok(None) };
    let bad = |m: &str| Error::Invalid(format!("malformed witness: {m}"));
    match orig.command.as_str() {
        "equiv" if orig.verdict == "Equivalent" => {
            let a = load_diagram(flag(argv, "diagram").ok_or_else(|| bad("no --diagram"))?, depth)?;
            let b = load_diagram(flag(argv, "other").ok_or_else(|| bad("no --other"))?, depth)?;
            let swapped = w["swapped"].as_bool().ok_or_else(|| bad("swapped"))?;
            let cuts: Vec<usize> = serde_json::from_value(w["cuts"].clone()).map_err(|e| bad(&e.to_string()))?;
            let maps: Vec<Vec<usize>> = serde_json::from_value(w["vertex_maps"].clone()).map_err(|e| bad(&e.to_string()))?;
            let src = if swapped { &b } else { &a };
            let wit = contraction_witness(src, &cuts, &maps, swapped)?;
            let n = replay_witness(&a, &b, &wit).map_err(Error::Invalid)?;
            Ok(Some(format!("{n} intertwining conditions hold")))
        }
        "diagnose-cocycle" => {
            let n = load_nested(flag(argv, "nested").ok_or_else(|| bad("no --nested"))?, depth)?;
            let ws: Vec<DiscontinuityWitness> = serde_json::from_value(w.clone()).map_err(|e| bad(&e.to_string()))?;
            if let Some(f) = ws.iter().find(|x| !replay_discontinuity(&n, x)) {
                return Err(Error::Invalid(format!("witness for n = {} at {} does not replay", f.n, f.cell)));
            }
            Ok(Some(format!("{} discontinuity witnesses replay", ws.len())))
        }
        "check-semisat" if orig.verdict == "FailsWithWitness" => {
            let n = load_nested(flag(argv, "nested").ok_or_else(|| bad("no --nested"))?, depth)?;
            let w: SemisatWitness = serde_json::from_value(w.clone()).map_err(|e| bad(&e.to_string()))?;
            replay_semisat(&n, &w)?;
            Ok(Some("images of the two witness points separate".into()))
        }
        _ => Ok(None),
    }
}

/// Recomputes both images of a semi-saturation witness and their separation.
fn replay_semisat(n: &NestedSequence, w: &SemisatWitness) -> Result<()> {
    let s = &n.space;
    let d = s.depth();
    let phi1 = &n.maps[&if w.side == Side::Forward { 1 } else { -1 }];
    let cell = |name: &str| s.cell_by_name(d, name).ok_or_else(|| Error::UnknownName(name.to_string()));
    let (a, b) = (cell(&w.first)?, cell(&w.second)?);
    let (ia, ib) = (phi1.map_deep(s, a)?, phi1.map_deep(s, b)?);
    if s.cell_name(d, ia) != w.first_image || s.cell_name(d, ib) != w.second_image {
        return Err(Error::Invalid("recorded images differ from recomputed ones".into()));
    }
    let l = w.separation_level;
    if l == 0 || l > d || s.ancestor(d, ia, l) == s.ancestor(d, ib, l) {
        return Err(Error::Invalid("images do not separate at the recorded level".into()));
    }
    let p = cell(&w.point)?;
    let near = |x| w.level <= d && s.ancestor(d, x, w.level) == s.ancestor(d, p, w.level);
    if !near(a) || !near(b) {
        return Err(Error::Invalid("witness points are not in the recorded neighbourhood".into()));
    }
    Ok(())
}

fn replay(path: &Path, r: &mut Report) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let orig: Report = serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("not a report: {e}")))?;
    if orig.command == "replay" {
        return Err(Error::Invalid("cannot replay a replay report".into()));
    }
    r.detail("replayed", &orig.command);
    let cli = Cli::try_parse_from(std::iter::once("vershik-lab".to_string()).chain(orig.argv.iter().cloned()))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let again = run(&cli, &orig.argv);
    let same = again.verdict == orig.verdict && again.witness == orig.witness && again.exit_code == orig.exit_code;
    r.detail("rerun_matches", same);
    let check = check_witness(&orig);
    match &check {
        Ok(Some(msg)) => r.detail("witness_check", msg),
        Ok(None) => r.detail("witness_check", "none"),
        Err(e) => r.detail("witness_check", format!("failed: {e}")),
    }
    if same && check.is_ok() {
        r.verdict("Replayed", EXIT_OK);
    } else {
        r.verdict("Mismatch", EXIT_VIOLATION);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn report(s: &str) -> Report {
        match execute(&args(s)) {
            Outcome::Report(r, _) => r,
            Outcome::Message(m, c) => panic!("usage error {c}: {m}"),
        }
    }

    #[test]
    fn successor_on_builtin() {
        let r = report("successor --diagram builtin:dyadic_diagram --path 1,1,0 --depth 3");
        assert_eq!(r.details["successor"], "0,0,1");
        assert_eq!(r.exit_code, EXIT_OK);
        let r = report("successor --diagram builtin:dyadic_diagram --path 1,1,1 --depth 3");
        assert_eq!(r.exit_code, EXIT_VIOLATION);
    }

    #[test]
    fn usage_errors_exit_three() {
        assert!(matches!(execute(&args("successor --path 1")), Outcome::Message(_, EXIT_INPUT)));
        assert!(matches!(execute(&args("--help")), Outcome::Message(_, EXIT_OK)));
        let r = report("validate-diagram --diagram builtin:nope");
        assert_eq!(r.exit_code, EXIT_INPUT);
    }

    #[test]
    fn recorded_flags_are_found() {
        let a = args("equiv --diagram a.bd --other=b.bd --depth 6");
        assert_eq!(flag(&a, "diagram"), Some("a.bd"));
        assert_eq!(flag(&a, "other"), Some("b.bd"));
        assert_eq!(depth_of(&a), 6);
    }
}
