//! Exact bounded convex polytopes with rational vertices.
//!
//! Both the vertex and the facet description are kept. Facet normals are primitive
//! integer vectors pointing into the polytope, so a facet reads
//! `⟨l_F, p⟩ ≥ −a_F`. Conversions use exhaustive subset enumeration, which is fine
//! for the desk-scale inputs this crate targets (dimension ≤ 6, a few hundred
//! facets); larger inputs are rejected with [`Error::TooLarge`].

mod builtin;
mod triangulate;

use bitvec::vec::BitVec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

pub use builtin::{builtin, Builtin};
pub use triangulate::{ApexRule, Triangulation};

use crate::error::{Error, Result};
use crate::rational::{
    affine_rank, cofactor_normal, determinant, dot_int, format_rational, mat_vec,
    primitive_integer, rank, solve, to_f64, Rational, RationalVector,
};

pub const MAX_DIM: usize = 6;
const MAX_SUBSETS: u128 = 5_000_000;

/// Closed half-space `{p : ⟨normal, p⟩ ≥ −offset}` with a primitive integer normal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfSpace {
    normal: Vec<BigInt>,
    offset: Rational,
}

impl HalfSpace {
    /// Builds a half-space, dividing normal and offset by the gcd of the normal.
    pub fn new(normal: Vec<BigInt>, offset: Rational) -> Result<Self> {
        let g = crate::rational::gcd_all(&normal);
        if g.is_zero() {
            return Err(Error::BadParams("zero facet normal".into()));
        }
        let offset = offset / BigRational::from_integer(g.clone());
        Ok(Self {
            normal: normal.into_iter().map(|x| x / &g).collect(),
            offset,
        })
    }

    pub fn from_ints(normal: &[i64], offset: Rational) -> Result<Self> {
        Self::new(normal.iter().map(|&x| BigInt::from(x)).collect(), offset)
    }

    /// Half-space `⟨normal, p⟩ ≥ −offset` with a rational normal, rescaled to primitive form.
    pub fn from_rational(normal: &[Rational], offset: Rational) -> Result<Self> {
        let prim = primitive_integer(normal)
            .ok_or_else(|| Error::BadParams("zero facet normal".into()))?;
        // prim = s · normal for some s > 0
        let idx = normal.iter().position(|q| !q.is_zero()).unwrap();
        let s = BigRational::from_integer(prim[idx].clone()) / &normal[idx];
        Ok(Self {
            normal: prim,
            offset: offset * s,
        })
    }

    pub fn normal(&self) -> &[BigInt] {
        &self.normal
    }

    pub fn offset(&self) -> &Rational {
        &self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Slack `⟨l, p⟩ + a`; nonnegative exactly on the half-space.
    pub fn slack(&self, p: &RationalVector) -> Rational {
        dot_int(&self.normal, p.coords()) + &self.offset
    }

    pub fn contains(&self, p: &RationalVector) -> bool {
        !self.slack(p).is_negative()
    }

    pub fn normal_rational(&self) -> Vec<Rational> {
        self.normal
            .iter()
            .map(|x| BigRational::from_integer(x.clone()))
            .collect()
    }

    pub fn normal_f64(&self) -> Vec<f64> {
        self.normal_rational().iter().map(to_f64).collect()
    }

    pub fn normal_norm(&self) -> f64 {
        self.normal_f64().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::fmt::Display for HalfSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n: Vec<String> = self.normal.iter().map(|x| x.to_string()).collect();
        write!(f, "<({}), p> >= -{}", n.join(", "), format_rational(&self.offset))
    }
}

/// Lattice classification of a Fano-normalized polytope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatticeClass {
    pub is_lattice: bool,
    pub is_reflexive: bool,
    pub is_simplicial: bool,
    /// `|det|` of the facet normals through each simplicial vertex, `None` otherwise.
    pub vertex_deltas: Vec<Option<u64>>,
    pub is_smooth: bool,
}

/// A bounded, full-dimensional polytope in canonical form.
///
/// Vertices are sorted lexicographically, facets by `(normal, offset)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalPolytope {
    dim: usize,
    vertices: Vec<RationalVector>,
    facets: Vec<HalfSpace>,
    /// `incidence[f][v]` is set when vertex `v` lies on facet `f`.
    incidence: Vec<BitVec>,
}

fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    (0..k).fold(1u128, |acc, i| acc * (m - i) as u128 / (i + 1) as u128)
}

/// Calls `f` on every increasing `k`-subset of `0..m`.
pub(crate) fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + m - k) else {
            return;
        };
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Strict vertices of a planar point set (sorted, deduplicated input), by monotone chain.
fn planar_hull(pts: &[RationalVector]) -> Vec<RationalVector> {
    let cross = |o: &RationalVector, a: &RationalVector, b: &RationalVector| {
        (&a[0] - &o[0]) * (&b[1] - &o[1]) - (&a[1] - &o[1]) * (&b[0] - &o[0])
    };
    let chain = |iter: &mut dyn Iterator<Item = &RationalVector>| {
        let mut h: Vec<RationalVector> = Vec::new();
        for p in iter {
            while h.len() >= 2 && !cross(&h[h.len() - 2], &h[h.len() - 1], p).is_positive() {
                h.pop();
            }
            h.push(p.clone());
        }
        h.pop();
        h
    };
    let mut hull = chain(&mut pts.iter());
    hull.extend(chain(&mut pts.iter().rev()));
    hull
}

fn check_dims(mut dims: impl Iterator<Item = usize>) -> Result<usize> {
    let n = dims.next().ok_or(Error::DegenerateInput)?;
    for d in dims {
        if d != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d,
            });
        }
    }
    if n == 0 {
        return Err(Error::DegenerateInput);
    }
    if n > MAX_DIM {
        return Err(Error::TooLarge(format!(
            "dimension {n} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    Ok(n)
}

impl RationalPolytope {
    /// Convex hull of a finite point set.
    pub fn from_vertices(points: Vec<RationalVector>) -> Result<Self> {
        let n = check_dims(points.iter().map(RationalVector::dim))?;
        let mut pts = points;
        pts.sort();
        pts.dedup();
        let refs: Vec<&RationalVector> = pts.iter().collect();
        if affine_rank(&refs) != Some(n) {
            return Err(Error::DegenerateInput);
        }
        let pts = match n {
            1 => vec![pts[0].clone(), pts[pts.len() - 1].clone()],
            2 => planar_hull(&pts),
            _ => pts,
        };
        let m = pts.len();
        if binomial(m, n) > MAX_SUBSETS {
            return Err(Error::TooLarge(format!(
                "{m} points in dimension {n} exceed the exhaustive facet search budget"
            )));
        }

        let mut facets: Vec<HalfSpace> = Vec::new();
        for_each_combination(m, n, |subset| {
            let base = &pts[subset[0]];
            let rows: Vec<Vec<Rational>> = subset[1..]
                .iter()
                .map(|&i| (&pts[i] - base).into_coords())
                .collect();
            let normal = cofactor_normal(&rows, n);
            let Some(prim) = primitive_integer(&normal) else {
                return;
            };
            let level = dot_int(&prim, base.coords());
            let mut above = false;
            let mut below = false;
            for p in &pts {
                let s = dot_int(&prim, p.coords()) - &level;
                if s.is_positive() {
                    above = true;
                } else if s.is_negative() {
                    below = true;
                }
                if above && below {
                    return;
                }
            }
            let (normal, offset) = if below {
                (prim.into_iter().map(|x| -x).collect::<Vec<_>>(), level)
            } else {
                (prim, -level)
            };
            let hs = HalfSpace { normal, offset };
            if !facets.contains(&hs) {
                facets.push(hs);
            }
        });
        Self::assemble(n, pts, facets)
    }

    /// Intersection of half-spaces; redundant inequalities are dropped.
    pub fn from_facets(halfspaces: Vec<HalfSpace>) -> Result<Self> {
        let n = check_dims(halfspaces.iter().map(HalfSpace::dim))?;
        let mut hs = halfspaces;
        hs.sort();
        hs.dedup();
        let m = hs.len();
        if binomial(m, n) > MAX_SUBSETS {
            return Err(Error::TooLarge(format!(
                "{m} half-spaces in dimension {n} exceed the exhaustive vertex search budget"
            )));
        }
        let normals: Vec<Vec<Rational>> = hs.iter().map(HalfSpace::normal_rational).collect();
        if rank(&normals) < n {
            return Err(Error::Unbounded);
        }
        // A pointed cone {d : L d ≥ 0} is nonzero iff it has an extreme ray, which is
        // cut out by n − 1 independent tight rows.
        let mut unbounded = false;
        for_each_combination(m, n - 1, |subset| {
            if unbounded {
                return;
            }
            let rows: Vec<Vec<Rational>> = subset.iter().map(|&i| normals[i].clone()).collect();
            let d = cofactor_normal(&rows, n);
            if d.iter().all(Zero::is_zero) {
                return;
            }
            let signs: Vec<Rational> = normals
                .iter()
                .map(|l| crate::rational::dot(l, &d))
                .collect();
            if signs.iter().all(|s| !s.is_negative()) || signs.iter().all(|s| !s.is_positive()) {
                unbounded = true;
            }
        });
        if unbounded {
            return Err(Error::Unbounded);
        }

        let mut vertices: Vec<RationalVector> = Vec::new();
        for_each_combination(m, n, |subset| {
            let a: Vec<Vec<Rational>> = subset.iter().map(|&i| normals[i].clone()).collect();
            let b: Vec<Rational> = subset.iter().map(|&i| -hs[i].offset.clone()).collect();
            let Some(x) = solve(&a, &b) else {
                return;
            };
            let p = RationalVector::new(x);
            if hs.iter().all(|h| h.contains(&p)) && !vertices.contains(&p) {
                vertices.push(p);
            }
        });
        if vertices.is_empty() {
            return Err(Error::Empty);
        }
        Self::from_vertices(vertices)
    }

    fn assemble(n: usize, points: Vec<RationalVector>, mut facets: Vec<HalfSpace>) -> Result<Self> {
        facets.sort();
        let tight = |p: &RationalVector| -> Vec<usize> {
            facets
                .iter()
                .enumerate()
                .filter(|(_, f)| f.slack(p).is_zero())
                .map(|(i, _)| i)
                .collect()
        };
        let mut vertices: Vec<RationalVector> = points
            .into_iter()
            .filter(|p| {
                let t = tight(p);
                t.len() >= n && rank(&t.iter().map(|&i| facets[i].normal_rational()).collect::<Vec<_>>()) == n
            })
            .collect();
        vertices.sort();
        let incidence = facets
            .iter()
            .map(|f| vertices.iter().map(|v| f.slack(v).is_zero()).collect())
            .collect();
        Ok(Self {
            dim: n,
            vertices,
            facets,
            incidence,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[RationalVector] {
        &self.vertices
    }

    pub fn facets(&self) -> &[HalfSpace] {
        &self.facets
    }

    pub fn facet_vertices(&self, facet: usize) -> impl Iterator<Item = usize> + '_ {
        self.incidence[facet].iter_ones()
    }

    pub fn incidence(&self) -> &[BitVec] {
        &self.incidence
    }

    pub fn vertices_f64(&self) -> Vec<Vec<f64>> {
        self.vertices.iter().map(RationalVector::to_f64).collect()
    }

    pub fn contains(&self, p: &RationalVector) -> bool {
        self.facets.iter().all(|f| f.contains(p))
    }

    /// `true` when every facet offset is 1 (the anticanonical normalization).
    pub fn is_fano_normalized(&self) -> bool {
        self.facets.iter().all(|f| f.offset.is_one())
    }

    pub fn origin_is_interior(&self) -> bool {
        self.facets.iter().all(|f| f.offset.is_positive())
    }

    pub fn triangulate(&self) -> Triangulation {
        triangulate::pulling(self)
    }

    /// Exact Lebesgue volume.
    pub fn volume(&self) -> Rational {
        self.triangulate().volume(self)
    }

    /// Exact barycenter of the uniform measure.
    pub fn barycenter(&self) -> RationalVector {
        self.triangulate().barycenter(self)
    }

    /// Polar body `{x : ⟨x, p⟩ ≤ 1 ∀ p ∈ P}`, whose vertices are `−l_F / a_F`.
    pub fn polar_dual(&self) -> Result<Self> {
        if !self.origin_is_interior() {
            return Err(Error::OriginNotInterior);
        }
        let verts = self
            .facets
            .iter()
            .map(|f| {
                let inv = -f.offset.recip();
                RationalVector::new(f.normal_rational().iter().map(|x| x * &inv).collect())
            })
            .collect();
        Self::from_vertices(verts)
    }

    /// `∫_{∂P} dσ` where `dσ` is (n−1)-dimensional Lebesgue measure divided by `‖l_F‖`
    /// on each facet. Exact: the normalization cancels against the cone height.
    pub fn boundary_measure(&self) -> Rational {
        (0..self.facets.len())
            .map(|f| self.facet_measure(f))
            .fold(Rational::zero(), |a, b| a + b)
    }

    /// Normalized measure `vol_{n−1}(F)/‖l_F‖` of one facet.
    pub fn facet_measure(&self, facet: usize) -> Rational {
        triangulate::facet_pieces(self, facet)
            .into_iter()
            .map(|(m, _)| m)
            .fold(Rational::zero(), |a, b| a + b)
    }

    /// `∫_{∂P} p dσ`, exact.
    pub fn boundary_moment(&self) -> RationalVector {
        let mut acc = RationalVector::zeros(self.dim);
        for f in 0..self.facets.len() {
            for (m, centroid) in triangulate::facet_pieces(self, f) {
                acc = &acc + &centroid.scale(&m);
            }
        }
        acc
    }

    /// Facet simplices with their dσ-measure and vertex coordinates, for quadrature.
    pub fn boundary_simplices(&self) -> Vec<(usize, Rational, Vec<RationalVector>)> {
        (0..self.facets.len())
            .flat_map(|f| {
                triangulate::facet_simplices(self, f)
                    .into_iter()
                    .map(move |(m, s)| (f, m, s))
            })
            .collect()
    }

    /// Lattice classification; requires all facet offsets equal to 1.
    pub fn classify_lattice(&self) -> Result<LatticeClass> {
        if !self.is_fano_normalized() {
            return Err(Error::NotFanoNormalized);
        }
        let n = self.dim;
        let is_lattice = self.vertices.iter().all(RationalVector::is_integral);
        let mut is_simplicial = true;
        let mut vertex_deltas = Vec::with_capacity(self.vertices.len());
        for v in 0..self.vertices.len() {
            let through: Vec<usize> = (0..self.facets.len())
                .filter(|&f| self.incidence[f][v])
                .collect();
            if through.len() == n {
                let rows: Vec<Vec<Rational>> = through
                    .iter()
                    .map(|&f| self.facets[f].normal_rational())
                    .collect();
                let d = determinant(&rows).abs().to_integer();
                vertex_deltas.push(u64::try_from(d).ok());
            } else {
                is_simplicial = false;
                vertex_deltas.push(None);
            }
        }
        let is_smooth = is_simplicial && vertex_deltas.iter().all(|d| *d == Some(1));
        Ok(LatticeClass {
            is_lattice,
            is_reflexive: is_lattice,
            is_simplicial,
            vertex_deltas,
            is_smooth,
        })
    }

    /// Image under an invertible linear map given by its rows.
    pub fn linear_image(&self, a: &[Vec<Rational>]) -> Result<Self> {
        if a.len() != self.dim || a.iter().any(|r| r.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.len(),
            });
        }
        if determinant(a).is_zero() {
            return Err(Error::SingularMatrix);
        }
        Self::from_vertices(self.vertices.iter().map(|v| mat_vec(a, v)).collect())
    }

    pub fn translate(&self, t: &RationalVector) -> Result<Self> {
        Self::from_vertices(self.vertices.iter().map(|v| v + t).collect())
    }

    /// Cartesian product `P × Q`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let mut verts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                let mut c = a.coords().to_vec();
                c.extend_from_slice(b.coords());
                verts.push(RationalVector::new(c));
            }
        }
        Self::from_vertices(verts)
    }

    /// Largest `ρ` with `±ρ eᵢ ∈ P` for every axis; requires the origin in the interior.
    pub fn axis_inradius(&self) -> Rational {
        let mut best: Option<Rational> = None;
        for f in &self.facets {
            for x in &f.normal {
                if x.is_zero() {
                    continue;
                }
                // t·|x| ≤ a_F along the axis direction that decreases ⟨l, p⟩
                let t = &f.offset / BigRational::from_integer(x.abs());
                best = Some(match best {
                    Some(b) if b <= t => b,
                    _ => t,
                });
            }
        }
        best.unwrap_or_else(Rational::zero)
    }
}
