//! Convex duality numerics: max-affine potentials, discrete Legendre transforms, integrals
//! of `e^{−φ}` and of dual potentials, and the functional Santaló inequality.

mod cells;
mod expdd;
mod grid;
mod quadrature;

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::Serialize;

pub use cells::{cell_integrals, CellIntegrals, Domain};
pub use expdd::exp_dd;
pub use grid::{DualGrid, DualGridFunction};
pub use quadrature::{adaptive, gk15, integrate_generic, tail_bound, tail_constants, upper_gamma_int};

use crate::error::{Error, Result};
use crate::polytope::RationalPolytope;
use crate::rational::{Rational, RationalVector};

/// `φ(x) = maxᵢ(⟨pᵢ,x⟩ − cᵢ)` with exact rational slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxAffinePotential {
    dim: usize,
    slopes: Vec<RationalVector>,
    slopes_f64: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

impl MaxAffinePotential {
    pub fn new(slopes: Vec<RationalVector>, intercepts: Vec<f64>) -> Result<Self> {
        let Some(first) = slopes.first() else {
            return Err(Error::BadParams("a max-affine potential needs at least one piece".into()));
        };
        let dim = first.dim();
        if let Some(bad) = slopes.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        if intercepts.len() != slopes.len() {
            return Err(Error::DimensionMismatch {
                expected: slopes.len(),
                got: intercepts.len(),
            });
        }
        if intercepts.iter().any(|c| !c.is_finite()) {
            return Err(Error::BadParams("intercepts must be finite".into()));
        }
        Ok(Self {
            dim,
            slopes_f64: slopes.iter().map(RationalVector::to_f64).collect(),
            slopes,
            intercepts,
        })
    }

    /// Pieces indexed by the nodes of a dual function: `φ = u*` restricted to the grid.
    pub fn from_dual(u: &DualGridFunction) -> Self {
        Self {
            dim: u.grid.dim,
            slopes: u.grid.nodes.clone(),
            slopes_f64: u.grid.nodes_f64.clone(),
            intercepts: u.values.clone(),
        }
    }

    /// `ψ_P`, the support function of `P`, as a max-affine potential over its vertices.
    pub fn support(p: &RationalPolytope) -> Self {
        let n = p.vertices().len();
        Self::new(p.vertices().to_vec(), vec![0.0; n]).expect("polytopes have vertices")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slopes.is_empty()
    }

    pub fn slopes(&self) -> &[RationalVector] {
        &self.slopes
    }

    pub fn slopes_f64(&self) -> &[Vec<f64>] {
        &self.slopes_f64
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    /// Value and lowest maximizing index.
    pub fn argmax(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (s, c)) in self.slopes_f64.iter().zip(&self.intercepts).enumerate() {
            let v = dot(s, x) - c;
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.argmax(x).0
    }

    /// `φ + t`.
    pub fn shifted(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.intercepts.iter_mut().for_each(|c| *c -= t);
        out
    }

    /// `x ↦ φ(x + b)`.
    pub fn translated(&self, b: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, s) in out.intercepts.iter_mut().zip(&self.slopes_f64) {
            *c -= dot(s, b);
        }
        out
    }

    /// Exact per-cell integrals over `domain` (dimensions 1 and 2).
    pub fn cells(&self, domain: &Domain) -> Result<CellIntegrals> {
        cell_integrals(&self.slopes_f64, &self.intercepts, domain)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ψ_P(x) = max_{v ∈ vert P} ⟨v,x⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportFunction {
    vertices: Vec<RationalVector>,
}

impl SupportFunction {
    pub fn new(p: &RationalPolytope) -> Self {
        Self {
            vertices: p.vertices().to_vec(),
        }
    }

    pub fn eval_exact(&self, x: &RationalVector) -> Rational {
        self.vertices.iter().map(|v| v.dot(x)).max().expect("nonempty")
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(&v.to_f64(), x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A value with an error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error_bound: f64,
}

/// `max_i ⟨pᵢ,x⟩ − u(pᵢ)` over the grid nodes, with the lowest maximizing index.
pub fn legendre(u: &DualGridFunction, x: &[f64]) -> (f64, usize) {
    conjugate_at(&u.grid.nodes_f64, &u.values, x)
}

/// Discrete conjugate `max_i ⟨pᵢ,x⟩ − vᵢ` (ties to the lowest index).
pub fn conjugate_at(points: &[Vec<f64>], values: &[f64], x: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, (p, v)) in points.iter().zip(values).enumerate() {
        let t = dot(p, x) - v;
        if t > best.0 {
            best = (t, i);
        }
    }
    best
}

/// Conjugate of data on `points`, sampled on `targets`.
pub fn conjugate(points: &[Vec<f64>], values: &[f64], targets: &[Vec<f64>]) -> Vec<f64> {
    targets.iter().map(|x| conjugate_at(points, values, x).0).collect()
}

/// `∫_{ℝⁿ} e^{−φ}`: closed form for `n ≤ 2`, nested quadrature with a tail bound for `n = 3`.
pub fn integrate_exp_neg(phi: &MaxAffinePotential, tol: f64) -> Result<Integral> {
    if phi.dim() <= 2 {
        integrate_exp_neg_exact(phi)
    } else {
        integrate_generic(phi, tol)
    }
}

pub fn integrate_exp_neg_exact(phi: &MaxAffinePotential) -> Result<Integral> {
    let ci = phi.cells(&Domain::Whole)?;
    Ok(Integral {
        value: ci.total,
        error_bound: rounding_bound(ci.total, phi.len()),
    })
}

fn rounding_bound(v: f64, pieces: usize) -> f64 {
    64.0 * f64::EPSILON * v.abs() * pieces as f64
}

/// `Σ wᵢ uᵢ ≈ ∫_P u dy`.
pub fn integrate_dual(u: &DualGridFunction) -> f64 {
    u.grid.weights_f64.iter().zip(&u.values).map(|(w, v)| w * v).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SantaloResult {
    pub integral: f64,
    pub dual_integral: f64,
    pub product: f64,
    pub bound: f64,
    pub holds: bool,
    /// Barycenter of `e^{−φ}dx` that was moved to the origin.
    pub centering: Vec<f64>,
}

/// Functional Santaló inequality `∫e^{−φ}·∫e^{−φ*} ≤ (2π)ⁿ` after centering `e^{−φ}dx`.
///
/// `φ*` is finite exactly on the slope hull `Q`, where it is the max-affine function whose
/// pieces are the vertices `x_T` of the cell complex of `φ`: `φ*(y) = max_T ⟨x_T,y⟩ − φ(x_T)`.
pub fn santalo_check(phi: &MaxAffinePotential, tol: f64) -> Result<SantaloResult> {
    let n = phi.dim();
    if n > 2 {
        return Err(Error::Unsupported(format!("Santaló check in dimension {n}")));
    }
    tail_constants(phi)?;
    let ci = phi.cells(&Domain::Whole)?;
    let b: Vec<f64> = ci.moment.iter().map(|m| m / ci.total).collect();
    let hull = RationalPolytope::from_vertices(phi.slopes().to_vec())?;
    let domain = match n {
        1 => {
            let v = hull.vertices_f64();
            Domain::Interval(v[0][0], v[1][0])
        }
        _ => Domain::Polygon(ccw(hull.vertices_f64())),
    };
    let verts = dedupe_points(&ci.vertices);
    let slopes: Vec<Vec<f64>> = verts.iter().map(|x| x.iter().zip(&b).map(|(a, c)| a - c).collect()).collect();
    let intercepts: Vec<f64> = verts.iter().map(|x| phi.eval(x)).collect();
    let dual = cell_integrals(&slopes, &intercepts, &domain)?;
    let product = ci.total * dual.total;
    let bound = (2.0 * PI).powi(n as i32);
    Ok(SantaloResult {
        integral: ci.total,
        dual_integral: dual.total,
        product,
        bound,
        holds: product <= bound + tol,
        centering: b,
    })
}

fn ccw(mut pts: Vec<Vec<f64>>) -> Vec<[f64; 2]> {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| (a[1] - cy).atan2(a[0] - cx).total_cmp(&(b[1] - cy).atan2(b[0] - cx)));
    pts.into_iter().map(|p| [p[0], p[1]]).collect()
}

fn dedupe_points(pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scale = pts
        .iter()
        .flat_map(|p| p.iter().map(|x| x.abs()))
        .fold(1.0, f64::max);
    let q = 1e-10 * scale;
    let mut seen = HashSet::new();
    pts.iter()
        .filter(|p| seen.insert(p.iter().map(|x| (x / q).round() as i64).collect::<Vec<_>>()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{builtin, Builtin};
    use crate::rational::{int, rat};

    fn p1_fs_dual(p: f64) -> f64 {
        let f = |t: f64| if t <= 0.0 { 0.0 } else { t * t.ln() };
        f(1.0 + p) + f(1.0 - p) - 2.0 * 2f64.ln()
    }

    #[test]
    fn support_function_is_legendre_of_zero() {
        let p = builtin(&Builtin::Pn(2)).unwrap();
        let g = DualGrid::new(&p, 6).unwrap();
        let u = DualGridFunction::from_fn(g, |_| 0.0);
        let s = SupportFunction::new(&p);
        for x in [[0.3, -0.7], [1.0, 2.0], [-5.0, 0.25]] {
            assert!((legendre(&u, &x).0 - s.eval(&x)).abs() < 1e-14);
        }
        let xr = RationalVector::new(vec![rat(1, 3), int(-1)]);
        assert_eq!(s.eval_exact(&xr), rat(5, 3));
    }

    #[test]
    fn quadratic_is_self_dual_on_fine_grid() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let g = DualGrid::new(&p, 400).unwrap();
        let u = DualGridFunction::from_fn(g, |y| 0.5 * y[0] * y[0]);
        assert!((legendre(&u, &[0.5]).0 - 0.125).abs() < 1e-5);
    }

    #[test]
    fn exact_and_generic_paths_agree_in_dimension_one() {
        let slopes: Vec<RationalVector> = (-10..=10).map(|k| RationalVector::new(vec![rat(k, 10)])).collect();
        let c: Vec<f64> = (-10..=10).map(|k| p1_fs_dual(k as f64 / 10.0)).collect();
        let phi = MaxAffinePotential::new(slopes, c).unwrap();
        let exact = integrate_exp_neg_exact(&phi).unwrap();
        let generic = integrate_generic(&phi, 1e-12).unwrap();
        assert!((exact.value - generic.value).abs() < 1e-9, "{} {}", exact.value, generic.value);
        assert!(generic.error_bound < 1e-9);
    }

    #[test]
    fn generic_path_in_two_and_three_dimensions() {
        let sq = builtin(&Builtin::Cube(2)).unwrap();
        let v = integrate_generic(&MaxAffinePotential::support(&sq), 1e-8).unwrap();
        assert!((v.value - 4.0).abs() < 1e-6, "{v:?}");
        let p3 = builtin(&Builtin::Pn(3)).unwrap();
        let v = integrate_exp_neg(&MaxAffinePotential::support(&p3), 1e-7).unwrap();
        let expect = 6.0 * crate::rational::to_f64(&p3.polar_dual().unwrap().volume());
        assert!((v.value - expect).abs() < 1e-5 * expect, "{v:?} vs {expect}");
    }

    #[test]
    fn cosh_potential_integrates_to_one() {
        // φ = 2log(2cosh(x/2)) sampled by tangent lines with slopes tanh(k/10)
        let ks: Vec<i32> = (-300..=300).collect();
        let slopes: Vec<RationalVector> = ks
            .iter()
            .map(|&k| {
                let t = (k as f64 / 10.0 / 2.0).tanh();
                RationalVector::new(vec![num_rational::BigRational::from_float(t).unwrap()])
            })
            .collect();
        let c: Vec<f64> = slopes
            .iter()
            .map(|s| {
                let p = crate::rational::to_f64(&s[0]);
                let x = 2.0 * p.atanh();
                p * x - 2.0 * (2.0 * (x / 2.0).cosh()).ln()
            })
            .collect();
        let phi = MaxAffinePotential::new(slopes, c).unwrap();
        let v = integrate_exp_neg(&phi, 1e-10).unwrap().value;
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn integrate_dual_of_fs_potential() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let coarse = integrate_dual(&DualGridFunction::from_fn(DualGrid::new(&p, 50).unwrap(), |y| p1_fs_dual(y[0])));
        let fine = integrate_dual(&DualGridFunction::from_fn(DualGrid::new(&p, 400).unwrap(), |y| p1_fs_dual(y[0])));
        assert!((fine + 2.0).abs() < (coarse + 2.0).abs());
        assert!((fine + 2.0).abs() < 1e-4);
        let ones = DualGridFunction::from_fn(DualGrid::new(&p, 9).unwrap(), |_| 1.0);
        assert!((integrate_dual(&ones) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn santalo_for_support_function_of_interval() {
        let phi = MaxAffinePotential::support(&builtin(&Builtin::Pn(1)).unwrap());
        let r = santalo_check(&phi, 1e-9).unwrap();
        assert!((r.integral - 2.0).abs() < 1e-14);
        assert!((r.dual_integral - 2.0).abs() < 1e-14);
        assert!(r.holds && (r.product - 4.0).abs() < 1e-13);
    }

    #[test]
    fn santalo_gaussian_equality_case_in_one_dimension() {
        let slopes: Vec<RationalVector> = (-800..=800).map(|k| RationalVector::new(vec![rat(k, 100)])).collect();
        let c: Vec<f64> = (-800..=800).map(|k| 0.5 * (k as f64 / 100.0).powi(2)).collect();
        let phi = MaxAffinePotential::new(slopes, c).unwrap();
        let r = santalo_check(&phi, 1e-9).unwrap();
        assert!(r.holds);
        assert!((r.product / r.bound - 1.0).abs() < 1e-4, "{}", r.product / r.bound);
    }

    #[test]
    fn scaling_law() {
        let phi = MaxAffinePotential::support(&builtin(&Builtin::Hexagon).unwrap());
        let a = integrate_exp_neg(&phi, 1e-10).unwrap().value;
        let b = integrate_exp_neg(&phi.shifted(0.7), 1e-10).unwrap().value;
        assert!((b - a * (-0.7f64).exp()).abs() < 1e-12 * a);
    }
}
