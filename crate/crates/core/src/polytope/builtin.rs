use std::fmt;
use std::str::FromStr;

use num_integer::Integer;

use super::{HalfSpace, RationalPolytope};
use crate::error::{Error, Result};
use crate::rational::{int, RationalVector};

/// Named anticanonical moment polytopes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// ℙⁿ: `(n+1)Σₙ − (1,…,1)`.
    Pn(usize),
    /// ℙⁿ⁻¹ × ℙ¹, of dimension `n`.
    PnxP1(usize),
    /// The rhombus dual to `conv{(±p, ±q)}`.
    Xpq(u64, u64),
    /// Del Pezzo surface of degree 6 (ℙ² blown up in three points).
    Hexagon,
    /// ℙ² blown up in one point.
    Bl1P2,
    /// ℙ² blown up in two points.
    Bl2P2,
    /// ℙ³ blown up in one point.
    Bl1P3,
    /// (ℙ¹)ⁿ: the cube `[−1, 1]ⁿ`.
    Cube(usize),
}

impl Builtin {
    pub fn name(&self) -> String {
        match self {
            Builtin::Pn(n) => format!("P{n}"),
            Builtin::PnxP1(n) => format!("P{}xP1", n - 1),
            Builtin::Xpq(p, q) => format!("X_{p},{q}"),
            Builtin::Hexagon => "dP6".into(),
            Builtin::Bl1P2 => "Bl1P2".into(),
            Builtin::Bl2P2 => "Bl2P2".into(),
            Builtin::Bl1P3 => "Bl1P3".into(),
            Builtin::Cube(n) => format!("(P1)^{n}"),
        }
    }

    /// Parses a name with its parameter list, e.g. `("Xpq", ["2", "3"])`.
    pub fn parse(name: &str, params: &[String]) -> Result<Self> {
        let arg = |i: usize| -> Result<u64> {
            params
                .get(i)
                .ok_or_else(|| Error::BadParams(format!("{name} needs {} parameter(s)", i + 1)))?
                .parse::<u64>()
                .map_err(|e| Error::BadParams(format!("{name}: {e}")))
        };
        let expect = |k: usize| -> Result<()> {
            if params.len() != k {
                return Err(Error::BadParams(format!(
                    "{name} takes {k} parameter(s), got {}",
                    params.len()
                )));
            }
            Ok(())
        };
        let b = match name.to_ascii_lowercase().as_str() {
            "pn" => {
                expect(1)?;
                Builtin::Pn(arg(0)? as usize)
            }
            "pnxp1" => {
                expect(1)?;
                Builtin::PnxP1(arg(0)? as usize)
            }
            "xpq" => {
                expect(2)?;
                Builtin::Xpq(arg(0)?, arg(1)?)
            }
            "cube" => {
                expect(1)?;
                Builtin::Cube(arg(0)? as usize)
            }
            "hexagon" | "dp6" => {
                expect(0)?;
                Builtin::Hexagon
            }
            "bl1p2" => {
                expect(0)?;
                Builtin::Bl1P2
            }
            "bl2p2" => {
                expect(0)?;
                Builtin::Bl2P2
            }
            "bl1p3" => {
                expect(0)?;
                Builtin::Bl1P3
            }
            other => return Err(Error::BadParams(format!("unknown builtin `{other}`"))),
        };
        Ok(b)
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let params: Vec<String> = parts.map(str::to_string).collect();
        Builtin::parse(name, &params)
    }
}

fn projective_space(n: usize) -> Result<RationalPolytope> {
    let n_i = n as i64;
    let mut verts = vec![RationalVector::from_ints(&vec![-1; n])];
    for i in 0..n {
        let mut c = vec![-1; n];
        c[i] = n_i;
        verts.push(RationalVector::from_ints(&c));
    }
    RationalPolytope::from_vertices(verts)
}

fn polygon(v: &[[i64; 2]]) -> Result<RationalPolytope> {
    RationalPolytope::from_vertices(v.iter().map(|c| RationalVector::from_ints(c)).collect())
}

/// Builds the canonical moment polytope; all returned polytopes have facet offsets 1.
pub fn builtin(b: &Builtin) -> Result<RationalPolytope> {
    match *b {
        Builtin::Pn(n) => {
            if n == 0 {
                return Err(Error::BadParams("Pn needs n ≥ 1".into()));
            }
            projective_space(n)
        }
        Builtin::PnxP1(n) => {
            if n < 2 {
                return Err(Error::BadParams("PnxP1 needs total dimension n ≥ 2".into()));
            }
            projective_space(n - 1)?.product(&projective_space(1)?)
        }
        Builtin::Cube(n) => {
            if n == 0 {
                return Err(Error::BadParams("cube needs n ≥ 1".into()));
            }
            let seg = projective_space(1)?;
            let mut p = seg.clone();
            for _ in 1..n {
                p = p.product(&seg)?;
            }
            Ok(p)
        }
        Builtin::Xpq(p, q) => {
            if p == 0 || q == 0 {
                return Err(Error::BadParams("Xpq needs p, q ≥ 1".into()));
            }
            if p.gcd(&q) != 1 {
                return Err(Error::BadParams(format!(
                    "(±{p}, ±{q}) are not primitive: gcd(p, q) ≠ 1"
                )));
            }
            let (p, q) = (p as i64, q as i64);
            let hs = [[p, q], [p, -q], [-p, q], [-p, -q]]
                .iter()
                .map(|nrm| HalfSpace::from_ints(nrm, int(1)))
                .collect::<Result<Vec<_>>>()?;
            RationalPolytope::from_facets(hs)
        }
        Builtin::Hexagon => polygon(&[[1, 0], [1, 1], [0, 1], [-1, 0], [-1, -1], [0, -1]]),
        Builtin::Bl1P2 => polygon(&[[-1, 0], [0, -1], [2, -1], [-1, 2]]),
        Builtin::Bl2P2 => polygon(&[[1, 0], [0, 1], [-1, 1], [-1, -1], [1, -1]]),
        Builtin::Bl1P3 => RationalPolytope::from_facets(
            [
                [1, 0, 0],
                [0, 1, 0],
                [0, 0, 1],
                [-1, -1, -1],
                [1, 1, 1],
            ]
            .iter()
            .map(|nrm| HalfSpace::from_ints(nrm, int(1)))
            .collect::<Result<Vec<_>>>()?,
        ),
    }
}
