//! Plain-text formats: ordered diagrams (`.bd`), Bratteli systems (`.sys`)
//! and nested sequences (`.ns`). The grammar is documented in
//! `docs/formats.md`; every emitter output parses back to an equal object.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bratteli::{Edge, Extension, OrderedBratteliDiagram, OrderedDiagram};
use crate::error::{Error, Result};
use crate::nested::{BeyondRule, NestedSequence};
use crate::pds::BratteliSystem;
use crate::space::{CellId, CellImage, ClopenSet, ClosedApprox, Domain, PartialHomeo, SymbolicSpace, TailRule};

/// A parsed file of any of the three kinds.
#[derive(Clone, Debug)]
pub enum InputFile {
    Diagram(OrderedBratteliDiagram),
    System(BratteliSystem),
    Nested(NestedSequence),
}

/// Parses any of the three formats, dispatching on the header line.
pub fn parse_any(text: &str) -> Result<InputFile> {
    match lines(text).next().map(|(_, t)| t[0]) {
        Some("diagram") => parse_diagram(text).map(InputFile::Diagram),
        Some("system") => parse_system(text).map(InputFile::System),
        Some("nested") => parse_nested(text).map(InputFile::Nested),
        _ => Err(Error::Parse {
            line: 1,
            msg: "expected `diagram`, `system` or `nested`".into(),
        }),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, tok: Option<&&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(line, format!("expected {what}")))
}

/// Emits a diagram.
pub fn emit_diagram(b: &OrderedBratteliDiagram) -> String {
    let mut s = String::from("diagram\n");
    if let Extension::Stationary { period } = b.extension() {
        let _ = writeln!(s, "stationary {period}");
    }
    for (n, names) in b.names().iter().enumerate() {
        for v in names {
            let _ = writeln!(s, "vertex {n} {v}");
        }
    }
    for (i, d) in b.levels().iter().enumerate() {
        let n = i + 1;
        for w in 0..d.range_count() {
            for (k, &e) in d.fiber(w).iter().enumerate() {
                let edge = d.edge(e);
                let _ = writeln!(s, "edge {n} {} {} {k}", b.names()[n - 1][edge.source], b.names()[n][w]);
            }
        }
    }
    s
}

/// Parses a diagram.
pub fn parse_diagram(text: &str) -> Result<OrderedBratteliDiagram> {
    let mut names: Vec<Vec<String>> = Vec::new();
    let mut edges: Vec<Vec<(usize, String, String, usize)>> = Vec::new();
    let mut ext = Extension::None;
    let mut it = lines(text);
    match it.next() {
        Some((_, t)) if t == ["diagram"] => {}
        Some((l, _)) => return Err(perr(l, "expected header `diagram`")),
        None => return Err(perr(1, "empty file")),
    }
    for (l, t) in it {
        match t[0] {
            "stationary" => ext = Extension::Stationary { period: num(l, t.get(1), "a period")? },
            "vertex" => {
                let n: usize = num(l, t.get(1), "a level")?;
                let name = t.get(2).ok_or_else(|| perr(l, "expected a vertex name"))?;
                if n > names.len() {
                    return Err(perr(l, "vertex levels must appear in order"));
                }
                if n == names.len() {
                    names.push(Vec::new());
                }
                names[n].push(name.to_string());
            }
            "edge" => {
                let n: usize = num(l, t.get(1), "a level")?;
                if n == 0 {
                    return Err(perr(l, "edge levels start at 1"));
                }
                let (Some(a), Some(b)) = (t.get(2), t.get(3)) else {
                    return Err(perr(l, "expected source and range names"));
                };
                let k: usize = num(l, t.get(4), "an order index")?;
                if edges.len() < n {
                    edges.resize(n, Vec::new());
                }
                edges[n - 1].push((l, a.to_string(), b.to_string(), k));
            }
            other => return Err(perr(l, format!("unknown keyword `{other}`"))),
        }
    }
    if names.len() != edges.len() + 1 {
        return Err(perr(0, format!("{} vertex levels for {} edge levels", names.len(), edges.len())));
    }
    let mut levels = Vec::with_capacity(edges.len());
    for (i, es) in edges.into_iter().enumerate() {
        let find = |lvl: usize, nm: &str, line: usize| {
            names[lvl]
                .iter()
                .position(|x| x == nm)
                .ok_or_else(|| perr(line, format!("unknown vertex `{nm}` at level {lvl}")))
        };
        let mut out = Vec::with_capacity(es.len());
        for (line, a, b, k) in es {
            out.push(Edge {
                source: find(i, &a, line)?,
                range: find(i + 1, &b, line)?,
                order: k,
            });
        }
        levels.push(OrderedDiagram::new(names[i].len(), names[i + 1].len(), out)?);
    }
    OrderedBratteliDiagram::new(names, levels, ext)
}

fn emit_space(s: &SymbolicSpace, out: &mut String) {
    let d = s.depth();
    let _ = writeln!(out, "space {d}");
    for l in 1..=d {
        for c in 0..s.cell_count(l) as CellId {
            let parent = if l == 1 { "-" } else { s.cell_name(l - 1, s.parent(l, c)) };
            let _ = writeln!(out, "cell {l} {} {parent}", s.cell_name(l, c));
        }
    }
    for rule in s.tails() {
        let _ = writeln!(out, "tail {}", rule.name);
        for l in 1..d {
            for c in 0..s.cell_count(l) as CellId {
                if let Some(ch) = rule.child(l, c) {
                    let _ = writeln!(out, "step {} {l} {} {}", rule.name, s.cell_name(l, c), s.cell_name(l + 1, ch));
                }
            }
        }
    }
}

fn emit_set(s: &SymbolicSpace, key: &str, kind: &str, set: &ClopenSet, out: &mut String) {
    let _ = write!(out, "{key} {kind} {}", set.level);
    for c in &set.cells {
        let _ = write!(out, " {}", s.cell_name(set.level, *c));
    }
    out.push('\n');
}

fn emit_domain(s: &SymbolicSpace, key: &str, dom: &Domain, out: &mut String) {
    match dom {
        Domain::Exact(set) => emit_set(s, key, "exact", set, out),
        Domain::Complement(a) => {
            for set in &a.levels {
                emit_set(s, key, "removed", set, out);
            }
        }
    }
}

fn emit_map(s: &SymbolicSpace, n: i32, phi: &PartialHomeo, out: &mut String) {
    let d = s.depth();
    let _ = writeln!(out, "map {n}");
    emit_domain(s, "domain", phi.domain(), out);
    emit_domain(s, "range", phi.range(), out);
    for l in 1..=d {
        for c in 0..s.cell_count(l) as CellId {
            match phi.cell_image(l, c) {
                CellImage::Resolved(t) => {
                    let _ = writeln!(out, "img {l} {} {}", s.cell_name(l, c), s.cell_name(l, t));
                }
                CellImage::Outside => {
                    let _ = writeln!(out, "img {l} {} outside", s.cell_name(l, c));
                }
                CellImage::Unresolved => {}
            }
        }
    }
    for (&c, &t) in phi.point_overrides() {
        let _ = writeln!(out, "pt {} {}", s.cell_name(d, c), s.cell_name(d, t));
    }
}

/// Emits a Bratteli system.
pub fn emit_system(sys: &BratteliSystem) -> String {
    let mut out = String::from("system\n");
    emit_space(&sys.space, &mut out);
    emit_map(&sys.space, 1, &sys.phi, &mut out);
    out
}

/// Emits a nested sequence through its positive maps; `phi_0` and the
/// negative maps are implied.
pub fn emit_nested(nest: &NestedSequence) -> String {
    let mut out = format!("nested {}\n", nest.beyond.name());
    emit_space(&nest.space, &mut out);
    for (&n, phi) in nest.maps.range(1..) {
        emit_map(&nest.space, n, phi, &mut out);
    }
    out
}

#[derive(Default)]
struct MapDraft {
    line: usize,
    domain: DomainDraft,
    range: DomainDraft,
    images: Vec<(usize, usize, String, Option<String>)>,
    points: Vec<(usize, String, String)>,
}

#[derive(Default)]
enum DomainDraft {
    #[default]
    Missing,
    Exact(usize, usize, Vec<String>),
    Removed(Vec<(usize, usize, Vec<String>)>),
}

#[derive(Default)]
struct Draft {
    depth: usize,
    cells: Vec<(usize, usize, String, String)>,
    tails: Vec<String>,
    steps: Vec<(usize, String, usize, String, String)>,
    maps: Vec<(i32, MapDraft)>,
}

fn parse_body<'a>(it: impl Iterator<Item = (usize, Vec<&'a str>)>) -> Result<Draft> {
    let mut dr = Draft::default();
    for (l, t) in it {
        let arg = |i: usize, what: &str| t.get(i).map(|x| x.to_string()).ok_or_else(|| perr(l, format!("expected {what}")));
        match t[0] {
            "space" => dr.depth = num(l, t.get(1), "a depth")?,
            "cell" => dr.cells.push((l, num(l, t.get(1), "a level")?, arg(2, "a cell name")?, arg(3, "a parent")?)),
            "tail" => dr.tails.push(arg(1, "a rule name")?),
            "step" => dr.steps.push((
                l,
                arg(1, "a rule name")?,
                num(l, t.get(2), "a level")?,
                arg(3, "a cell")?,
                arg(4, "a child")?,
            )),
            "map" => dr.maps.push((num(l, t.get(1), "a map index")?, MapDraft { line: l, ..Default::default() })),
            "domain" | "range" | "img" | "pt" => {
                let (_, m) = dr.maps.last_mut().ok_or_else(|| perr(l, "map data before any `map` line"))?;
                match t[0] {
                    "img" => m.images.push((l, num(l, t.get(1), "a level")?, arg(2, "a cell")?, Some(arg(3, "an image")?).filter(|x| x != "outside"))),
                    "pt" => m.points.push((l, arg(1, "a cell")?, arg(2, "an image")?)),
                    key => {
                        let level: usize = num(l, t.get(2), "a level")?;
                        let names: Vec<String> = t[3..].iter().map(|x| x.to_string()).collect();
                        let slot = if key == "domain" { &mut m.domain } else { &mut m.range };
                        match (t.get(1).copied(), &mut *slot) {
                            (Some("exact"), DomainDraft::Missing) => *slot = DomainDraft::Exact(l, level, names),
                            (Some("removed"), DomainDraft::Missing) => *slot = DomainDraft::Removed(vec![(l, level, names)]),
                            (Some("removed"), DomainDraft::Removed(v)) => v.push((l, level, names)),
                            _ => return Err(perr(l, format!("bad or repeated `{key}` line"))),
                        }
                    }
                }
            }
            other => return Err(perr(l, format!("unknown keyword `{other}`"))),
        }
    }
    Ok(dr)
}

fn build_space(dr: &Draft) -> Result<SymbolicSpace> {
    let d = dr.depth;
    if d == 0 {
        return Err(perr(0, "missing `space <depth>` line"));
    }
    let mut names: Vec<Vec<String>> = vec![Vec::new(); d];
    let mut parent_names: Vec<Vec<(usize, String)>> = vec![Vec::new(); d];
    for (l, lvl, name, parent) in &dr.cells {
        if *lvl == 0 || *lvl > d {
            return Err(perr(*l, "cell level out of range"));
        }
        names[lvl - 1].push(name.clone());
        parent_names[lvl - 1].push((*l, parent.clone()));
    }
    let index: Vec<BTreeMap<&str, CellId>> = names
        .iter()
        .map(|ns| ns.iter().enumerate().map(|(i, n)| (n.as_str(), i as CellId)).collect())
        .collect();
    let lookup = |lvl: usize, nm: &str, line: usize| -> Result<CellId> {
        index
            .get(lvl.wrapping_sub(1))
            .and_then(|m| m.get(nm).copied())
            .ok_or_else(|| perr(line, format!("unknown cell `{nm}` at level {lvl}")))
    };
    let mut parents = vec![Vec::new(); d];
    for lvl in 2..=d {
        for (line, p) in &parent_names[lvl - 1] {
            parents[lvl - 1].push(lookup(lvl - 1, p, *line)?);
        }
    }
    let mut tails = Vec::new();
    for rule in &dr.tails {
        let mut child: Vec<Vec<Option<CellId>>> = (1..d).map(|l| vec![None; names[l - 1].len()]).collect();
        for (line, _, lvl, c, ch) in dr.steps.iter().filter(|s| &s.1 == rule) {
            if *lvl == 0 || *lvl >= d {
                return Err(perr(*line, "step level out of range"));
            }
            child[lvl - 1][lookup(*lvl, c, *line)? as usize] = Some(lookup(lvl + 1, ch, *line)?);
        }
        tails.push(TailRule::new(rule.clone(), child));
    }
    if let Some((line, r, ..)) = dr.steps.iter().find(|s| !dr.tails.contains(&s.1)) {
        return Err(perr(*line, format!("step for undeclared tail `{r}`")));
    }
    SymbolicSpace::new(names, parents, tails)
}

fn cell_id(s: &SymbolicSpace, lvl: usize, nm: &str, line: usize) -> Result<CellId> {
    if lvl == 0 || lvl > s.depth() {
        return Err(perr(line, format!("level {lvl} out of range")));
    }
    s.cell_by_name(lvl, nm)
        .ok_or_else(|| perr(line, format!("unknown cell `{nm}` at level {lvl}")))
}

fn build_set(s: &SymbolicSpace, line: usize, lvl: usize, names: &[String]) -> Result<ClopenSet> {
    let cells = names
        .iter()
        .map(|n| cell_id(s, lvl, n, line))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClopenSet::new(lvl, cells))
}

fn build_domain(s: &SymbolicSpace, d: &DomainDraft, line: usize) -> Result<Domain> {
    match d {
        DomainDraft::Missing => Err(perr(line, "map without domain or range")),
        DomainDraft::Exact(l, lvl, names) => Ok(Domain::Exact(build_set(s, *l, *lvl, names)?)),
        DomainDraft::Removed(rows) => {
            if rows.len() != s.depth() {
                return Err(perr(line, "removed sets must list every level"));
            }
            let levels = rows
                .iter()
                .enumerate()
                .map(|(i, (l, lvl, names))| {
                    if *lvl != i + 1 {
                        return Err(perr(*l, "removed sets must appear level by level"));
                    }
                    build_set(s, *l, *lvl, names)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Domain::Complement(ClosedApprox { levels }))
        }
    }
}

fn build_map(s: &SymbolicSpace, m: &MapDraft) -> Result<PartialHomeo> {
    let d = s.depth();
    let mut forward: Vec<Vec<CellImage>> = (1..=d).map(|l| vec![CellImage::Unresolved; s.cell_count(l)]).collect();
    for (line, lvl, c, img) in &m.images {
        let c = cell_id(s, *lvl, c, *line)?;
        forward[lvl - 1][c as usize] = match img {
            Some(t) => CellImage::Resolved(cell_id(s, *lvl, t, *line)?),
            None => CellImage::Outside,
        };
    }
    let mut points = BTreeMap::new();
    for (line, c, t) in &m.points {
        points.insert(cell_id(s, d, c, *line)?, cell_id(s, d, t, *line)?);
    }
    let domain = build_domain(s, &m.domain, m.line)?;
    let range = build_domain(s, &m.range, m.line)?;
    PartialHomeo::new(s, domain, range, forward, points)
}

/// Parses a Bratteli system.
pub fn parse_system(text: &str) -> Result<BratteliSystem> {
    let mut it = lines(text);
    match it.next() {
        Some((_, t)) if t == ["system"] => {}
        _ => return Err(perr(1, "expected header `system`")),
    }
    let dr = parse_body(it)?;
    let space = build_space(&dr)?;
    match dr.maps.as_slice() {
        [(1, m)] => {
            let phi = build_map(&space, m)?;
            BratteliSystem::new(space, phi)
        }
        _ => Err(perr(0, "a system has exactly one block `map 1`")),
    }
}

/// Parses a nested sequence; `map n` blocks must be `1, 2, …, M` in order.
pub fn parse_nested(text: &str) -> Result<NestedSequence> {
    let mut it = lines(text);
    let rule = match it.next() {
        Some((l, t)) if t[0] == "nested" => BeyondRule::parse(t.get(1).ok_or_else(|| perr(l, "expected a rule"))?)?,
        _ => return Err(perr(1, "expected header `nested <rule>`")),
    };
    let dr = parse_body(it)?;
    let space = build_space(&dr)?;
    let mut positive = Vec::with_capacity(dr.maps.len());
    for (i, (n, m)) in dr.maps.iter().enumerate() {
        if *n != i as i32 + 1 {
            return Err(perr(m.line, format!("expected `map {}`", i + 1)));
        }
        positive.push(build_map(&space, m)?);
    }
    Ok(NestedSequence::from_positive(space, positive, rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{dh_nested, dyadic, nonsemisat_bratteli, nonsemisat_nested, odometer_system, two_extremes};

    #[test]
    fn diagrams_round_trip() {
        for b in [dyadic(4), two_extremes(3)] {
            let text = emit_diagram(&b);
            assert_eq!(parse_diagram(&text).unwrap(), b);
        }
    }

    #[test]
    fn systems_round_trip() {
        for s in [odometer_system(5), nonsemisat_bratteli(5)] {
            let back = parse_system(&emit_system(&s)).unwrap();
            assert_eq!(back.space, s.space);
            assert_eq!(back.phi, s.phi);
        }
    }

    #[test]
    fn nested_round_trip() {
        for n in [dh_nested(5, 4, 3), nonsemisat_nested(6)] {
            let back = parse_nested(&emit_nested(&n)).unwrap();
            assert_eq!(back.space, n.space);
            assert_eq!(back.maps, n.maps);
            assert_eq!(back.beyond, n.beyond);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "diagram\nvertex 0 r\nvertex 1 a\nedge 1 r b 0\n";
        assert!(matches!(parse_diagram(bad), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(parse_any("bogus"), Err(Error::Parse { line: 1, .. })));
        let text = emit_system(&odometer_system(3)).replace("cell 2 01 0", "cell 2 01 7");
        assert!(matches!(parse_system(&text), Err(Error::Parse { .. })));
    }
}
