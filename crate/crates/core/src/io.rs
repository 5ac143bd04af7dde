//! Polytope file formats, run reports and the embedded fixture dataset.
//!
//! # Native format
//!
//! ```text
//! # comments start with '#'
//! name P2
//! tags reflexive smooth
//! dim 2
//! -1 -1
//! 2 -1
//! -1 2
//! ```
//!
//! `name` and `tags` are optional; `dim` precedes the vertex rows; coordinates are integers or
//! fractions `a/b`. [`write_native`] emits the canonical form: header lines in this order and
//! vertices sorted lexicographically, so parsing and writing again is byte-identical.
//!
//! # Matrix format
//!
//! Blocks of a header `r c` (further header tokens are ignored) followed by `r` rows of `c`
//! integers. If `r > c` the rows are vertices, otherwise the columns; `transpose` flips the rule.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::polytope::{builtin, Builtin, RationalPolytope};
use crate::rational::{format_rational, parse_rational, Rational, RationalVector};

/// Input syntax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Native,
    Matrix,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "native" => Ok(Format::Native),
            "matrix" | "palp" => Ok(Format::Matrix),
            other => Err(Error::BadParams(format!("unknown format {other:?}"))),
        }
    }
}

/// A polytope with its optional metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeFile {
    pub name: Option<String>,
    pub tags: Vec<String>,
    pub polytope: RationalPolytope,
}

impl PolytopeFile {
    pub fn new(polytope: RationalPolytope) -> Self {
        Self {
            name: None,
            tags: Vec::new(),
            polytope,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter().map(move |(s, t)| (line[..s].chars().count() + 1, t))
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

/// Parses the native format.
pub fn parse_native(text: &str) -> Result<PolytopeFile> {
    let mut name = None;
    let mut tags = Vec::new();
    let mut dim: Option<usize> = None;
    let mut rows: Vec<RationalVector> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let toks: Vec<(usize, &str)> = tokens(strip_comment(raw)).collect();
        let Some(&(col, head)) = toks.first() else { continue };
        match head {
            "name" => {
                if toks.len() < 2 {
                    return Err(parse_err(line, col, "`name` needs a value"));
                }
                name = Some(toks[1..].iter().map(|t| t.1).collect::<Vec<_>>().join(" "));
            }
            "tags" => tags.extend(toks[1..].iter().map(|t| t.1.to_string())),
            "dim" => {
                if dim.is_some() {
                    return Err(parse_err(line, col, "duplicate `dim`"));
                }
                let &(c, v) = toks.get(1).ok_or_else(|| parse_err(line, col, "`dim` needs a value"))?;
                let d: usize = v.parse().map_err(|_| parse_err(line, c, format!("invalid dimension {v:?}")))?;
                if d == 0 {
                    return Err(parse_err(line, c, "dimension must be positive"));
                }
                if toks.len() > 2 {
                    return Err(parse_err(line, toks[2].0, "unexpected token after dimension"));
                }
                dim = Some(d);
            }
            _ => {
                let d = dim.ok_or_else(|| parse_err(line, col, "vertex row before `dim`"))?;
                if toks.len() != d {
                    let c = toks.get(d).map_or(col, |t| t.0);
                    return Err(parse_err(line, c, format!("expected {d} coordinates, found {}", toks.len())));
                }
                let coords = toks
                    .iter()
                    .map(|&(c, t)| parse_rational(t).map_err(|m| parse_err(line, c, m)))
                    .collect::<Result<Vec<Rational>>>()?;
                rows.push(RationalVector::new(coords));
            }
        }
    }
    if dim.is_none() {
        return Err(parse_err(text.lines().count().max(1), 1, "missing `dim` line"));
    }
    Ok(PolytopeFile {
        name,
        tags,
        polytope: RationalPolytope::from_vertices(rows)?,
    })
}

/// Canonical native text.
pub fn write_native(file: &PolytopeFile) -> String {
    let mut out = String::new();
    if let Some(n) = &file.name {
        out.push_str(&format!("name {n}\n"));
    }
    if !file.tags.is_empty() {
        out.push_str(&format!("tags {}\n", file.tags.join(" ")));
    }
    out.push_str(&format!("dim {}\n", file.polytope.dim()));
    for v in file.polytope.vertices() {
        let row: Vec<String> = v.coords().iter().map(format_rational).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses every block of a matrix-format text.
pub fn parse_matrix(text: &str, transpose: bool) -> Result<Vec<RationalPolytope>> {
    let lines: Vec<(usize, Vec<(usize, &str)>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, tokens(strip_comment(l)).collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (line, head) = &lines[i];
        let num = |k: usize| -> Result<usize> {
            let &(c, t) = head.get(k).ok_or_else(|| parse_err(*line, 1, "matrix header needs `rows cols`"))?;
            t.parse().map_err(|_| parse_err(*line, c, format!("invalid matrix size {t:?}")))
        };
        let (r, c) = (num(0)?, num(1)?);
        if r == 0 || c == 0 {
            return Err(parse_err(*line, 1, "matrix size must be positive"));
        }
        let mut m: Vec<Vec<Rational>> = Vec::with_capacity(r);
        for k in 0..r {
            let Some((rl, row)) = lines.get(i + 1 + k) else {
                return Err(parse_err(*line, 1, format!("matrix block declares {r} rows, found {k}")));
            };
            if row.len() != c {
                return Err(parse_err(*rl, row.get(c).map_or(1, |t| t.0), format!("expected {c} entries, found {}", row.len())));
            }
            m.push(
                row.iter()
                    .map(|&(col, t)| {
                        t.parse::<i64>()
                            .map(crate::rational::int)
                            .map_err(|_| parse_err(*rl, col, format!("matrix entries must be integers, found {t:?}")))
                    })
                    .collect::<Result<_>>()?,
            );
        }
        let rows_are_vertices = (r > c) != transpose;
        let verts: Vec<RationalVector> = if rows_are_vertices {
            m.into_iter().map(RationalVector::new).collect()
        } else {
            (0..c).map(|j| RationalVector::new(m.iter().map(|row| row[j].clone()).collect())).collect()
        };
        out.push(RationalPolytope::from_vertices(verts)?);
        i += r + 1;
    }
    if out.is_empty() {
        return Err(parse_err(1, 1, "no matrix blocks found"));
    }
    Ok(out)
}

/// Matrix text with one vertex per column.
pub fn write_matrix(p: &RationalPolytope) -> Result<String> {
    if p.vertices().iter().any(|v| !v.is_integral()) {
        return Err(Error::Unsupported("matrix format needs lattice vertices".into()));
    }
    let n = p.dim();
    let m = p.vertices().len();
    let mut out = format!("{n} {m}\n");
    for k in 0..n {
        let row: Vec<String> = p.vertices().iter().map(|v| format_rational(&v[k])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Parses polytopes in either format; the native format carries exactly one.
pub fn parse_polytopes(bytes: &[u8], format: Format, transpose: bool) -> Result<Vec<PolytopeFile>> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(1, 1, format!("input is not UTF-8: {e}")))?;
    match format {
        Format::Native => Ok(vec![parse_native(text)?]),
        Format::Matrix => Ok(parse_matrix(text, transpose)?.into_iter().map(PolytopeFile::new).collect()),
    }
}

/// A single polytope in either format.
pub fn parse_polytope(bytes: &[u8], format: Format) -> Result<RationalPolytope> {
    let mut all = parse_polytopes(bytes, format, false)?;
    if all.len() != 1 {
        return Err(parse_err(1, 1, format!("expected one polytope, found {}", all.len())));
    }
    Ok(all.remove(0).polytope)
}

/// Guesses the format from the first meaningful token: a keyword means native.
pub fn sniff_format(bytes: &[u8]) -> Format {
    let text = String::from_utf8_lossy(bytes);
    for l in text.lines() {
        if let Some((_, t)) = tokens(strip_comment(l)).next() {
            return if matches!(t, "name" | "tags" | "dim") { Format::Native } else { Format::Matrix };
        }
    }
    Format::Native
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub const SCHEMA_VERSION: u32 = 1;

/// Machine-readable output of one command.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Named result sections, in insertion order.
    pub results: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<crate::analysis::CheckResult>,
    pub all_checks_hold: bool,
    pub notes: Vec<String>,
    pub timings_ms: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputInfo {
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    pub vertices: usize,
}

impl InputInfo {
    pub fn new(bytes: &[u8], file: &PolytopeFile) -> Self {
        Self {
            sha256: sha256_hex(bytes),
            name: file.name.clone(),
            dim: file.polytope.dim(),
            vertices: file.polytope.vertices().len(),
        }
    }
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: "arakelov-toric".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input: None,
            seed: None,
            results: serde_json::Map::new(),
            checks: Vec::new(),
            all_checks_hold: true,
            notes: Vec::new(),
            timings_ms: serde_json::Map::new(),
        }
    }

    pub fn insert(&mut self, key: &str, value: &impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Unsupported(format!("serialization: {e}")))?;
        self.results.insert(key.into(), v);
        Ok(())
    }

    pub fn add_checks(&mut self, checks: impl IntoIterator<Item = crate::analysis::CheckResult>) {
        for c in checks {
            self.all_checks_hold &= c.holds;
            self.checks.push(c);
        }
    }

    pub fn time(&mut self, key: &str, started: std::time::Instant) {
        self.timings_ms.insert(key.into(), serde_json::json!(started.elapsed().as_secs_f64() * 1e3));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Classification flags a fixture is expected to have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Expected {
    pub k_semistable: bool,
    pub smooth: bool,
    pub reflexive: bool,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    /// `"surface"`, `"threefold"` or `"family"`.
    pub group: &'static str,
    pub builtin: Builtin,
    pub expected: Expected,
}

impl Fixture {
    pub fn polytope(&self) -> RationalPolytope {
        builtin(&self.builtin).expect("fixtures are valid")
    }

    pub fn file(&self) -> PolytopeFile {
        PolytopeFile {
            name: Some(self.name.into()),
            tags: vec![self.group.into()],
            polytope: self.polytope(),
        }
    }
}

/// The embedded dataset: the five smooth toric del Pezzo surfaces, four toric Fano
/// threefolds and three members of the `X_{p,q}` family.
pub fn fixtures() -> Vec<Fixture> {
    let fx = |name, group, builtin, k_semistable, smooth, reflexive| Fixture {
        name,
        group,
        builtin,
        expected: Expected {
            k_semistable,
            smooth,
            reflexive,
        },
    };
    vec![
        fx("P2", "surface", Builtin::Pn(2), true, true, true),
        fx("P1xP1", "surface", Builtin::Cube(2), true, true, true),
        fx("Bl1P2", "surface", Builtin::Bl1P2, false, true, true),
        fx("Bl2P2", "surface", Builtin::Bl2P2, false, true, true),
        fx("dP6", "surface", Builtin::Hexagon, true, true, true),
        fx("P3", "threefold", Builtin::Pn(3), true, true, true),
        fx("P2xP1", "threefold", Builtin::PnxP1(3), true, true, true),
        fx("P1xP1xP1", "threefold", Builtin::Cube(3), true, true, true),
        fx("Bl1P3", "threefold", Builtin::Bl1P3, false, true, true),
        fx("X_2,3", "family", Builtin::Xpq(2, 3), true, false, false),
        fx("X_3,5", "family", Builtin::Xpq(3, 5), true, false, false),
        fx("X_2,5", "family", Builtin::Xpq(2, 5), true, false, false),
    ]
}

/// Fixture polytopes of one group.
pub fn fixture_group(group: &str) -> Vec<RationalPolytope> {
    fixtures().iter().filter(|f| f.group == group).map(Fixture::polytope).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn native_round_trip_and_errors() {
        let text = "# P2\nname P2\ndim 2\n-1 -1\n2 -1\n-1 2\n";
        let f = parse_native(text).unwrap();
        assert_eq!(f.polytope.volume(), rat(9, 2));
        let canon = write_native(&f);
        assert_eq!(write_native(&parse_native(&canon).unwrap()), canon);
        match parse_native("dim 1\n1/0\n-1\n") {
            Err(Error::Parse { line: 2, column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_native("dim 2\n1 0 0\n"), Err(Error::Parse { line: 2, column: 5, .. })));
        assert!(matches!(parse_native("1 2\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn matrix_orientation() {
        let p = parse_polytope(b"2 4\n1 0 -1 0\n0 1 0 -1\n", Format::Matrix).unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.volume(), rat(2, 1));
        let rows = parse_polytope(b"4 2\n1 0\n0 1\n-1 0\n0 -1\n", Format::Matrix).unwrap();
        assert_eq!(rows, p);
        let two = parse_matrix("3 2 M:3 3 N:3 3\n-1 -1\n2 -1\n-1 2\n2 3\n-1 2 -1\n-1 -1 2\n", false).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0], two[1]);
        assert!(parse_matrix("2 3\n1 0 -1\n0 1 -1\n", true).is_err());
        assert!(matches!(parse_matrix("# empty\n", false), Err(Error::Parse { line: 1, column: 1, .. })));
        assert!(matches!(parse_matrix("2 2\n1 x\n", false), Err(Error::Parse { line: 2, column: 3, .. })));
    }

    #[test]
    fn fixture_expectations() {
        let fx = fixtures();
        let surfaces: Vec<_> = fx.iter().filter(|f| f.group == "surface").collect();
        assert_eq!(surfaces.iter().filter(|f| f.polytope().barycenter().is_zero()).count(), 3);
        let max3 = fixture_group("threefold").iter().map(|p| p.volume()).max().unwrap();
        assert_eq!(max3, rat(32, 3));
        for f in &fx {
            assert_eq!(f.polytope().barycenter().is_zero(), f.expected.k_semistable, "{}", f.name);
        }
    }
}
