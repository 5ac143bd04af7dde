//! Donaldson's toric Mabuchi functional
//!
//! `M(u) = ∫_{∂P} u dσ − a∫_P u dy − ∫_P log det ∇²u dy`,  `a = ∫_{∂P}dσ / Vol(P)`,
//!
//! evaluated by simplex cubature, and its relation to the χ-volume of the Ding optimum.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{pn_chi_volume, pn_volume, CheckResult};
use crate::ding::DingResult;
use crate::error::{Error, Result};
use crate::legendre::DualGridFunction;
use crate::polytope::RationalPolytope;
use crate::rational::{to_f64, RationalVector};

/// A convex function on `P`.
pub trait DualPotential: Sync {
    fn dim(&self) -> usize;

    fn value(&self, y: &[f64]) -> f64;

    /// Value at a point of facet `facet`; potentials that are only defined on the interior by
    /// a limit override this.
    fn boundary_value(&self, y: &[f64], _facet: usize) -> f64 {
        self.value(y)
    }

    /// Row-major Hessian; central differences by default.
    fn hessian(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let h = 1e-4;
        let f = |d: &[(usize, f64)]| {
            let mut z = y.to_vec();
            for &(i, s) in d {
                z[i] += s;
            }
            self.value(&z)
        };
        let f0 = self.value(y);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            out[i * n + i] = (f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h);
            for j in 0..i {
                let v = (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)])) / (4.0 * h * h);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    /// `log det ∇²u(y)`.
    fn log_det_hessian(&self, y: &[f64]) -> Result<f64> {
        log_det_spd(&self.hessian(y), self.dim(), y)
    }

    fn value_and_log_det(&self, y: &[f64]) -> Result<(f64, f64)> {
        Ok((self.value(y), self.log_det_hessian(y)?))
    }
}

fn log_det_spd(h: &[f64], n: usize, y: &[f64]) -> Result<f64> {
    let (det, min_eig) = match n {
        1 => (h[0], h[0]),
        2 => {
            let (a, b, d) = (h[0], h[1], h[3]);
            let tr = a + d;
            let det = a * d - b * b;
            let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
            (det, 0.5 * (tr - disc))
        }
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(n, n, h);
            let eig = m.clone().symmetric_eigen();
            (m.determinant(), eig.eigenvalues.min())
        }
    };
    let scale = h.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if min_eig < -1e-9 * scale.max(1.0) {
        return Err(Error::NonConvexInput(format!("Hessian has eigenvalue {min_eig:.3e} at {y:?}")));
    }
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::HessianSingular(format!("det ∇²u = {det:.3e} at {y:?}")));
    }
    Ok(det.ln())
}

type HessianFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A potential given by closures.
pub struct FnPotential<F> {
    dim: usize,
    value: F,
    hessian: Option<HessianFn>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPotential<F> {
    pub fn new(dim: usize, value: F) -> Self {
        Self { dim, value, hessian: None }
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> DualPotential for FnPotential<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        (self.value)(y)
    }

    fn hessian(&self, y: &[f64]) -> Vec<f64> {
        match &self.hessian {
            Some(h) => h(y),
            None => central_hessian(self, y),
        }
    }
}

fn central_hessian<P: DualPotential + ?Sized>(u: &P, y: &[f64]) -> Vec<f64> {
    struct Plain<'a, P: ?Sized>(&'a P);
    impl<P: DualPotential + ?Sized> DualPotential for Plain<'_, P> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, y: &[f64]) -> f64 {
            self.0.value(y)
        }
    }
    Plain(u).hessian(y)
}

/// Guillemin's potential `Σ_F ℓ_F log ℓ_F` with `ℓ_F(y) = ⟨l_F,y⟩ + a_F`.
#[derive(Clone, Debug)]
pub struct GuilleminPotential {
    facets: Vec<(Vec<f64>, f64)>,
    dim: usize,
}

impl GuilleminPotential {
    pub fn new(p: &RationalPolytope) -> Self {
        Self {
            facets: p.facets().iter().map(|f| (f.normal_f64(), to_f64(f.offset()))).collect(),
            dim: p.dim(),
        }
    }
}

impl GuilleminPotential {
    /// `Σ_F l_F (1 + log ℓ_F)` over the facets with `ℓ_F > 0`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (l, a) in &self.facets {
            let t = dot(l, y) + a;
            if t > 0.0 {
                g.iter_mut().zip(l).for_each(|(gi, li)| *gi += li * (1.0 + t.ln()));
            }
        }
        g
    }
}

impl DualPotential for GuilleminPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|(l, a)| {
                let t = dot(l, y) + a;
                if t > 0.0 {
                    t * t.ln()
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn hessian(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for (l, a) in &self.facets {
            let t = dot(l, y) + a;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += l[i] * l[j] / t;
                }
            }
        }
        h
    }
}

/// Least-squares fit of dual node values by Guillemin's potential plus a polynomial of total
/// degree `≤ degree`: `u = u_G + Σ θ_α (y − y₀)^α / s^{|α|}`.
///
/// The fitted function shares the boundary behaviour of every symplectic potential, so its
/// Mabuchi energy is finite; the polynomial absorbs the smooth remainder.
#[derive(Clone, Debug)]
pub struct GuilleminFit {
    pub degree: usize,
    /// Weighted root-mean-square residual at the nodes.
    pub residual: f64,
    guillemin: GuilleminPotential,
    exponents: Vec<Vec<usize>>,
    coefficients: Vec<f64>,
    center: Vec<f64>,
    scale: f64,
}

fn exponents(n: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|e: Vec<usize>| {
                let used: usize = e.iter().sum();
                (0..=degree - used).map(move |k| {
                    let mut e = e.clone();
                    e.push(k);
                    e
                })
            })
            .collect();
    }
    out.sort_by_key(|e| (e.iter().sum::<usize>(), std::cmp::Reverse(e.clone())));
    out
}

impl GuilleminFit {
    pub fn new(p: &RationalPolytope, u: &DualGridFunction, degree: usize) -> Result<Self> {
        let grid = &u.grid;
        if grid.dim != p.dim() || grid.volume != p.volume() {
            return Err(Error::BadParams("dual function lives on a different polytope".into()));
        }
        let n = p.dim();
        let verts = p.vertices_f64();
        let center: Vec<f64> = (0..n).map(|k| verts.iter().map(|v| v[k]).sum::<f64>() / verts.len() as f64).collect();
        let scale = verts.iter().map(|v| dot(&sub(v, &center), &sub(v, &center)).sqrt()).fold(0.0, f64::max);
        let guillemin = GuilleminPotential::new(p);
        let mut fit = Self {
            degree,
            residual: 0.0,
            guillemin,
            exponents: exponents(n, degree),
            coefficients: Vec::new(),
            center,
            scale,
        };
        let m = fit.exponents.len();
        if grid.len() < m {
            return Err(Error::BadParams(format!("{} nodes cannot determine {m} coefficients", grid.len())));
        }
        let w: Vec<f64> = grid.weights_f64.iter().map(|w| w.sqrt()).collect();
        let a = nalgebra::DMatrix::from_fn(grid.len(), m, |i, j| w[i] * fit.monomial(j, &grid.nodes_f64[i]));
        let b = nalgebra::DVector::from_fn(grid.len(), |i, _| w[i] * (u.values[i] - fit.guillemin.value(&grid.nodes_f64[i])));
        let theta = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
        let r = &a * &theta - &b;
        let total: f64 = grid.weights_f64.iter().sum();
        fit.residual = (r.norm_squared() / total).sqrt();
        fit.coefficients = theta.iter().copied().collect();
        Ok(fit)
    }

    fn scaled(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.center).map(|(a, c)| (a - c) / self.scale).collect()
    }

    fn monomial(&self, j: usize, y: &[f64]) -> f64 {
        let t = self.scaled(y);
        self.exponents[j].iter().zip(&t).map(|(&e, x)| x.powi(e as i32)).product()
    }

    /// Hessian of the polynomial part.
    fn poly_hessian(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let t = self.scaled(y);
        let mut h = vec![0.0; n * n];
        for (e, c) in self.exponents.iter().zip(&self.coefficients) {
            for i in 0..n {
                for j in 0..n {
                    let mut e2 = e.clone();
                    let mut f = 1.0;
                    for k in [i, j] {
                        if e2[k] == 0 {
                            f = 0.0;
                            break;
                        }
                        f *= e2[k] as f64;
                        e2[k] -= 1;
                    }
                    if f != 0.0 {
                        h[i * n + j] += c * f * e2.iter().zip(&t).map(|(&k, x)| x.powi(k as i32)).product::<f64>();
                    }
                }
            }
        }
        h.iter_mut().for_each(|x| *x /= self.scale * self.scale);
        h
    }
}

impl DualPotential for GuilleminFit {
    fn dim(&self) -> usize {
        self.guillemin.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.guillemin.value(y) + (0..self.exponents.len()).map(|j| self.coefficients[j] * self.monomial(j, y)).sum::<f64>()
    }

    fn hessian(&self, y: &[f64]) -> Vec<f64> {
        let mut h = self.guillemin.hessian(y);
        h.iter_mut().zip(self.poly_hessian(y)).for_each(|(a, b)| *a += b);
        h
    }
}

/// Entropic smoothing of dual values `cᵢ` on nodes `pᵢ`:
///
/// `u_ε(y) = min { Σλᵢcᵢ + ε Σλᵢ log λᵢ : λ ≥ 0, Σλᵢ = 1, Σλᵢpᵢ = y }`,
///
/// the Legendre transform of `ε log Σ exp((⟨pᵢ,x⟩ − cᵢ)/ε)`. It is smooth and strictly convex
/// inside `P` with `∇²u_ε = (Cov_λ(p)/ε)⁻¹`; on a face only the nodes of that face are used.
#[derive(Clone, Debug)]
pub struct SmoothDualPotential {
    pub eps: f64,
    /// Grid step, `(Vol/#nodes)^{1/n}`.
    pub h: f64,
    dim: usize,
    nodes: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Per facet: node indices and an orthonormal basis of the facet directions.
    facets: Vec<(Vec<usize>, Vec<Vec<f64>>)>,
    interior_nodes: Vec<usize>,
    identity: Vec<Vec<f64>>,
    guillemin: GuilleminPotential,
}

struct Solve {
    value: f64,
    /// `Cov_λ(p)` in the face basis.
    cov: Vec<f64>,
}

impl SmoothDualPotential {
    pub fn new(p: &RationalPolytope, u: &DualGridFunction, eps: f64) -> Result<Self> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::BadParams(format!("smoothing parameter {eps} must be positive")));
        }
        let grid = &u.grid;
        if grid.dim != p.dim() || grid.volume != p.volume() {
            return Err(Error::BadParams("dual function lives on a different polytope".into()));
        }
        let n = p.dim();
        let facets = p
            .facets()
            .iter()
            .enumerate()
            .map(|(f, hs)| {
                let on: Vec<usize> = (0..grid.len()).filter(|&i| hs.slack(&grid.nodes[i]) == num_traits::Zero::zero()).collect();
                let verts: Vec<&RationalVector> = p.facet_vertices(f).map(|v| &p.vertices()[v]).collect();
                let dirs: Vec<Vec<f64>> = verts[1..].iter().map(|v| (*v - verts[0]).to_f64()).collect();
                (on, gram_schmidt(dirs))
            })
            .collect();
        Ok(Self {
            eps,
            h: (to_f64(&grid.volume) / grid.len() as f64).powf(1.0 / n as f64),
            dim: n,
            nodes: grid.nodes_f64.clone(),
            values: u.values.clone(),
            facets,
            interior_nodes: (0..grid.len()).collect(),
            identity: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            guillemin: GuilleminPotential::new(p),
        })
    }

    /// Minimizes `ε·lse((⟨pᵢ − y, Bz⟩ − cᵢ)/ε)` over `z` for the nodes `idx`, starting from
    /// the gradient of Guillemin's potential.
    fn solve(&self, y: &[f64], idx: &[usize], basis: &[Vec<f64>]) -> Solve {
        let d = basis.len();
        let eps = self.eps;
        let q: Vec<([f64; 2], f64)> = idx
            .iter()
            .map(|&i| {
                let mut qi = [0.0; 2];
                for (k, b) in basis.iter().enumerate() {
                    qi[k] = self.nodes[i].iter().zip(y).zip(b).map(|((a, c), e)| (a - c) * e).sum();
                }
                (qi, self.values[i])
            })
            .collect();
        let eval = |z: [f64; 2]| -> (f64, [f64; 2], [f64; 4]) {
            let tmax = q.iter().map(|(qi, c)| qi[0] * z[0] + qi[1] * z[1] - c).fold(f64::NEG_INFINITY, f64::max);
            let (mut s, mut m, mut m2) = (0.0, [0.0; 2], [0.0; 4]);
            for (qi, c) in &q {
                let w = ((qi[0] * z[0] + qi[1] * z[1] - c - tmax) / eps).exp();
                s += w;
                m[0] += w * qi[0];
                m[1] += w * qi[1];
                m2[0] += w * qi[0] * qi[0];
                m2[1] += w * qi[0] * qi[1];
                m2[3] += w * qi[1] * qi[1];
            }
            let mean = [m[0] / s, m[1] / s];
            let c01 = m2[1] / s - mean[0] * mean[1];
            let cov = [m2[0] / s - mean[0] * mean[0], c01, c01, m2[3] / s - mean[1] * mean[1]];
            (tmax + eps * s.ln(), mean, cov)
        };
        let start = self.guillemin.gradient(y);
        let mut z = [0.0; 2];
        for (k, b) in basis.iter().enumerate() {
            z[k] = dot(b, &start);
        }
        let (mut val, mut grad, mut cov) = eval(z);
        for _ in 0..200 {
            if grad[0].abs().max(grad[1].abs()) < 1e-14 {
                break;
            }
            let step = newton_step(&cov, &grad, d, eps);
            let slope = -(step[0] * grad[0] + step[1] * grad[1]);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let trial = [z[0] - t * step[0], z[1] - t * step[1]];
                let (tv, tg, tc) = eval(trial);
                if tv <= val + 1e-4 * t * slope {
                    moved = tv < val;
                    z = trial;
                    val = tv;
                    grad = tg;
                    cov = tc;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let cov = match d {
            0 => Vec::new(),
            1 => vec![cov[0]],
            _ => cov.to_vec(),
        };
        Solve { value: -val, cov }
    }

    /// Whole-polytope solve.
    fn interior(&self, y: &[f64]) -> Solve {
        self.solve(y, &self.interior_nodes, &self.identity)
    }
}

impl DualPotential for SmoothDualPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.interior(y).value
    }

    fn boundary_value(&self, y: &[f64], facet: usize) -> f64 {
        let (idx, basis) = &self.facets[facet];
        self.solve(y, idx, basis).value
    }

    fn hessian(&self, y: &[f64]) -> Vec<f64> {
        let s = self.interior(y);
        let n = self.dim;
        let m = nalgebra::DMatrix::from_row_slice(n, n, &s.cov) / self.eps;
        match m.try_inverse() {
            Some(inv) => inv.transpose().as_slice().to_vec(),
            None => vec![f64::INFINITY; n * n],
        }
    }

    fn log_det_hessian(&self, y: &[f64]) -> Result<f64> {
        let s = self.interior(y);
        let cov: Vec<f64> = s.cov.iter().map(|x| x / self.eps).collect();
        log_det_spd(&cov, self.dim, y).map(|l| -l)
    }

    fn value_and_log_det(&self, y: &[f64]) -> Result<(f64, f64)> {
        let s = self.interior(y);
        let cov: Vec<f64> = s.cov.iter().map(|x| x / self.eps).collect();
        Ok((s.value, -log_det_spd(&cov, self.dim, y)?))
    }
}

fn gram_schmidt(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        for b in &out {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// `(Cov/ε)⁻¹ g` in dimension `d ≤ 2`, falling back to a gradient step.
fn newton_step(cov: &[f64; 4], g: &[f64; 2], d: usize, eps: f64) -> [f64; 2] {
    match d {
        0 => [0.0; 2],
        1 if cov[0] > 0.0 => [eps * g[0] / cov[0], 0.0],
        2 => {
            let det = cov[0] * cov[3] - cov[1] * cov[2];
            if det > 0.0 && cov[0] > 0.0 {
                [eps * (cov[3] * g[0] - cov[1] * g[1]) / det, eps * (cov[0] * g[1] - cov[2] * g[0]) / det]
            } else {
                *g
            }
        }
        _ => *g,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cubature scheme over `P` and `∂P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quadrature {
    /// Fixed interior degree-2 rule on the `K`-fold subdivision of the triangulation.
    Grid { subdivision: usize },
    /// Globally adaptive degree-5/9 rules with midpoint refinement.
    Adaptive { tol: f64, max_simplices: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Adaptive {
            tol: 1e-7,
            max_simplices: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MabuchiValue {
    pub value: f64,
    pub boundary_term: f64,
    /// `∫_P u`.
    pub integral: f64,
    /// `∫_P log det ∇²u`.
    pub log_det_integral: f64,
    /// `∫_{∂P}dσ / Vol(P)`.
    pub a: f64,
    /// Part of `log_det_integral` within `collar_width` of `∂P`.
    pub collar_log_det: f64,
    pub collar_width: f64,
    pub error_estimate: f64,
}

type Simplex = Vec<Vec<f64>>;

/// Interior rules on the reference simplex: barycentric points and weights summing to 1.
fn rule(d: usize, high: bool) -> Vec<(Vec<f64>, f64)> {
    match (d, high) {
        (0, _) => vec![(vec![1.0], 1.0)],
        (1, false) => {
            let g = 0.5 / 3f64.sqrt();
            vec![(vec![0.5 - g, 0.5 + g], 0.5), (vec![0.5 + g, 0.5 - g], 0.5)]
        }
        (1, true) => {
            let x = [0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
            let w = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
            let mut out = vec![(vec![0.5, 0.5], w[0] / 2.0)];
            for k in 1..3 {
                for s in [-1.0, 1.0] {
                    let t = 0.5 + 0.5 * s * x[k];
                    out.push((vec![t, 1.0 - t], w[k] / 2.0));
                }
            }
            out
        }
        (2, false) => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            vec![(vec![a, b, b], 1.0 / 3.0), (vec![b, a, b], 1.0 / 3.0), (vec![b, b, a], 1.0 / 3.0)]
        }
        (2, true) => {
            let mut out = vec![(vec![1.0 / 3.0; 3], 0.225)];
            for (a, w) in [(0.470_142_064_105_115, 0.132_394_152_788_506), (0.101_286_507_323_456, 0.125_939_180_544_827)] {
                let b = 1.0 - 2.0 * a;
                for bc in [[a, a, b], [a, b, a], [b, a, a]] {
                    out.push((bc.to_vec(), w));
                }
            }
            out
        }
        _ => unreachable!("cubature is only used in dimensions 0 to 2"),
    }
}

fn simplex_measure(s: &Simplex) -> f64 {
    match s.len() {
        1 => 1.0,
        2 => s[0].iter().zip(&s[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        3 => {
            let (u, v) = (sub(&s[1], &s[0]), sub(&s[2], &s[0]));
            match u.len() {
                2 => 0.5 * (u[0] * v[1] - u[1] * v[0]).abs(),
                _ => unreachable!("triangles are planar here"),
            }
        }
        _ => unreachable!(),
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn children(s: &Simplex) -> Vec<Simplex> {
    let mid = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect() };
    match s.len() {
        2 => {
            let m = mid(&s[0], &s[1]);
            vec![vec![s[0].clone(), m.clone()], vec![m, s[1].clone()]]
        }
        3 => {
            let (m01, m12, m02) = (mid(&s[0], &s[1]), mid(&s[1], &s[2]), mid(&s[0], &s[2]));
            vec![
                vec![s[0].clone(), m01.clone(), m02.clone()],
                vec![m01.clone(), s[1].clone(), m12.clone()],
                vec![m02.clone(), m12.clone(), s[2].clone()],
                vec![m01, m12, m02],
            ]
        }
        _ => Vec::new(),
    }
}

fn apply_rule<const K: usize>(s: &Simplex, high: bool, f: &impl Fn(&[f64]) -> Result<[f64; K]>) -> Result<[f64; K]> {
    let vol = simplex_measure(s);
    let mut acc = [0.0; K];
    for (bc, w) in rule(s.len() - 1, high) {
        let y: Vec<f64> = (0..s[0].len()).map(|k| bc.iter().zip(s).map(|(b, v)| b * v[k]).sum()).collect();
        let v = f(&y)?;
        for k in 0..K {
            acc[k] += vol * w * v[k];
        }
    }
    Ok(acc)
}

struct Piece<const K: usize> {
    simplex: Simplex,
    value: [f64; K],
    err: f64,
}

impl<const K: usize> PartialEq for Piece<K> {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl<const K: usize> Eq for Piece<K> {}
impl<const K: usize> PartialOrd for Piece<K> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<const K: usize> Ord for Piece<K> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Integrates `f` over one simplex; the error is judged on the first `checked` components.
fn adaptive_simplex<const K: usize>(s: Simplex, f: &impl Fn(&[f64]) -> Result<[f64; K]>, tol: f64, max: usize, checked: usize) -> Result<([f64; K], f64)> {
    let estimate = |s: &Simplex| -> Result<Piece<K>> {
        let coarse = apply_rule(s, true, f)?;
        let mut fine = [0.0; K];
        for c in children(s) {
            let v = apply_rule(&c, true, f)?;
            for k in 0..K {
                fine[k] += v[k];
            }
        }
        let err = (0..checked).map(|k| (fine[k] - coarse[k]).abs()).fold(0.0, f64::max);
        Ok(Piece {
            simplex: s.clone(),
            value: fine,
            err,
        })
    };
    if s.len() == 1 {
        return Ok((apply_rule(&s, true, f)?, 0.0));
    }
    let mut heap = BinaryHeap::new();
    let first = estimate(&s)?;
    let mut err = first.err;
    heap.push(first);
    while err > tol && heap.len() < max {
        let p = heap.pop().expect("nonempty");
        err -= p.err;
        for c in children(&p.simplex) {
            let q = estimate(&c)?;
            err += q.err;
            heap.push(q);
        }
    }
    let mut total = [0.0; K];
    let mut e = 0.0;
    for p in heap.iter() {
        for (t, v) in total.iter_mut().zip(p.value) {
            *t += v;
        }
        e += p.err;
    }
    Ok((total, e))
}

fn integrate<const K: usize>(simplices: Vec<Simplex>, f: &(impl Fn(&[f64]) -> Result<[f64; K]> + Sync), q: &Quadrature, checked: usize) -> Result<([f64; K], f64)> {
    let total_vol: f64 = simplices.iter().map(simplex_measure).sum();
    let parts: Vec<Result<([f64; K], f64)>> = simplices
        .into_par_iter()
        .map(|s| match *q {
            Quadrature::Grid { .. } => apply_rule(&s, false, f).map(|v| (v, 0.0)),
            Quadrature::Adaptive { tol, max_simplices } => {
                let share = simplex_measure(&s) / total_vol.max(f64::MIN_POSITIVE);
                adaptive_simplex(s, f, tol * share.max(1e-3), max_simplices, checked)
            }
        })
        .collect();
    let mut acc = [0.0; K];
    let mut err = 0.0;
    for part in parts {
        let (v, e) = part?;
        for k in 0..K {
            acc[k] += v[k];
        }
        err += e;
    }
    Ok((acc, err))
}

/// Simplices of `P` (and their facet of origin for the boundary) for a quadrature scheme.
fn interior_simplices(p: &RationalPolytope, q: &Quadrature) -> Result<Vec<Simplex>> {
    let k = match *q {
        Quadrature::Grid { subdivision } => subdivision,
        Quadrature::Adaptive { .. } => 1,
    };
    let grid = crate::legendre::DualGrid::new(p, k)?;
    Ok(grid
        .simplices
        .iter()
        .map(|s| s.iter().map(|&i| grid.nodes_f64[i].clone()).collect())
        .collect())
}

/// Cuts a segment into `k` equal pieces; points are left alone.
fn split(s: Simplex, k: usize) -> Vec<Simplex> {
    if s.len() != 2 || k <= 1 {
        return vec![s];
    }
    let at = |t: f64| -> Vec<f64> { s[0].iter().zip(&s[1]).map(|(a, b)| a + t * (b - a)).collect() };
    (0..k).map(|i| vec![at(i as f64 / k as f64), at((i + 1) as f64 / k as f64)]).collect()
}

/// Evaluates `M(u)` on `P`.
pub fn donaldson_mabuchi(u: &dyn DualPotential, p: &RationalPolytope, q: &Quadrature) -> Result<MabuchiValue> {
    donaldson_mabuchi_with_collar(u, p, q, 0.0)
}

/// [`donaldson_mabuchi`], also reporting the log-det mass within `collar_width` of `∂P`.
pub fn donaldson_mabuchi_with_collar(u: &dyn DualPotential, p: &RationalPolytope, q: &Quadrature, collar_width: f64) -> Result<MabuchiValue> {
    let n = p.dim();
    if n > 2 {
        return Err(Error::Unsupported(format!("Mabuchi functional in dimension {n}")));
    }
    if u.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.dim() });
    }
    let vol = to_f64(&p.volume());
    let a = to_f64(&p.boundary_measure()) / vol;
    let facets: Vec<(Vec<f64>, f64, f64)> = p
        .facets()
        .iter()
        .map(|f| (f.normal_f64(), to_f64(f.offset()), f.normal_norm()))
        .collect();
    let dist = |y: &[f64]| facets.iter().map(|(l, off, norm)| (dot(l, y) + off) / norm).fold(f64::INFINITY, f64::min);
    let f = |y: &[f64]| -> Result<[f64; 3]> {
        let (v, ld) = u.value_and_log_det(y)?;
        let collar = if dist(y) < collar_width { ld } else { 0.0 };
        Ok([v, ld, collar])
    };
    let (vals, err_in) = integrate(interior_simplices(p, q)?, &f, q, 2)?;

    let pieces = match *q {
        Quadrature::Grid { subdivision } => subdivision,
        Quadrature::Adaptive { .. } => 1,
    };
    let mut boundary = 0.0;
    let mut err_b = 0.0;
    for (facet, measure, verts) in p.boundary_simplices() {
        let s: Simplex = verts.iter().map(RationalVector::to_f64).collect();
        let density = to_f64(&measure) / simplex_measure(&s);
        let g = |y: &[f64]| -> Result<[f64; 1]> { Ok([u.boundary_value(y, facet)]) };
        let (v, e) = integrate(split(s, pieces), &g, q, 1)?;
        boundary += density * v[0];
        err_b += density * e;
    }
    let [integral, log_det_integral, collar_log_det] = vals;
    Ok(MabuchiValue {
        value: boundary - a * integral - log_det_integral,
        boundary_term: boundary,
        integral,
        log_det_integral,
        a,
        collar_log_det,
        collar_width,
        error_estimate: err_in * (1.0 + a) + err_b,
    })
}

/// `−2χ + V log V + nV log π`, the minimum of `M` predicted from a χ-volume.
pub fn consistency_rhs(chi_volume: f64, vol: f64, n: usize) -> f64 {
    -2.0 * chi_volume + vol * vol.ln() + n as f64 * vol * PI.ln()
}

/// The same without the `nV log π` term.
pub fn consistency_rhs_unshifted(chi_volume: f64, vol: f64) -> f64 {
    -2.0 * chi_volume + vol * vol.ln()
}

/// `M(u_opt)` against the minimum predicted by the Ding optimum, relative tolerance `rel_tol`.
pub fn mabuchi_ding_consistency(p: &RationalPolytope, ding: &DingResult, u_opt: &dyn DualPotential, q: &Quadrature, rel_tol: f64) -> Result<CheckResult> {
    let m = donaldson_mabuchi(u_opt, p, q)?;
    let rhs = consistency_rhs(ding.chi_volume, ding.vol, p.dim());
    Ok(CheckResult::approx("mabuchi_ding_consistency", Some(p.dim()), m.value, rhs, rel_tol * rhs.abs().max(1.0)))
}

/// Entropic smoothings `ε ∈ {h, 2h, 4h}` of the Ding optimum and their Mabuchi values.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothingSweep {
    pub h: f64,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub error_estimates: Vec<f64>,
    /// `∫ log det ∇²u` over the collar of width `2h` along `∂P`.
    pub collar: Vec<f64>,
    /// Quadratic extrapolation of `values` to `ε = 0`.
    pub extrapolated: f64,
}

/// Options of [`mabuchi_consistency`].
#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyOptions {
    /// Degree of the polynomial correction in [`GuilleminFit`].
    pub fit_degree: usize,
    pub quadrature: Quadrature,
    pub rel_tol: f64,
    /// Also run the entropic sweep, with this quadrature.
    pub sweep: Option<Quadrature>,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            fit_degree: 2,
            quadrature: Quadrature::default(),
            rel_tol: 0.02,
            sweep: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    /// `M` at the fitted potential.
    pub value: f64,
    pub mabuchi: MabuchiValue,
    pub fit_degree: usize,
    pub fit_residual: f64,
    /// Predicted minimum `−2χ + V log V + nV log π`.
    pub rhs: f64,
    /// The same without `nV log π`.
    pub rhs_unshifted: f64,
    /// Uncertainty of `rhs` inherited from the height.
    pub rhs_error: f64,
    pub relative_gap: f64,
    pub sweep: Option<SmoothingSweep>,
    pub checks: Vec<CheckResult>,
}

/// Entropic smoothing sweep of the Ding optimum.
pub fn smoothing_sweep(p: &RationalPolytope, ding: &DingResult, q: &Quadrature) -> Result<SmoothingSweep> {
    let sol = solution(ding)?;
    let h = SmoothDualPotential::new(p, sol, 1.0)?.h;
    let eps: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|k| k * h).collect();
    let (mut values, mut collar, mut error_estimates) = (Vec::new(), Vec::new(), Vec::new());
    for &e in &eps {
        let u = SmoothDualPotential::new(p, sol, e)?;
        let m = donaldson_mabuchi_with_collar(&u, p, q, 2.0 * h)?;
        values.push(m.value);
        collar.push(m.collar_log_det);
        error_estimates.push(m.error_estimate);
    }
    Ok(SmoothingSweep {
        h,
        extrapolated: (8.0 * values[0] - 6.0 * values[1] + values[2]) / 3.0,
        eps,
        values,
        error_estimates,
        collar,
    })
}

fn solution(ding: &DingResult) -> Result<&DualGridFunction> {
    ding.solution
        .as_ref()
        .ok_or_else(|| Error::BadParams("Ding result carries no dual solution".into()))
}

/// Evaluates `M` at the Guillemin-anchored fit of the Ding optimum and compares it with the
/// minimum predicted from the χ-volume; optionally checks that no entropic smoothing falls
/// below that minimum.
pub fn mabuchi_consistency(p: &RationalPolytope, ding: &DingResult, opts: &ConsistencyOptions) -> Result<ConsistencyReport> {
    let n = p.dim();
    let fit = GuilleminFit::new(p, solution(ding)?, opts.fit_degree)?;
    let m = donaldson_mabuchi(&fit, p, &opts.quadrature)?;
    let rhs = consistency_rhs(ding.chi_volume, ding.vol, n);
    let rhs_error = 2.0 * ding.height_error / crate::rational::factorial_f64(n as u32 + 1);
    let tol = opts.rel_tol * rhs.abs().max(1.0);
    let mut checks = vec![CheckResult::approx("mabuchi_ding_consistency", Some(n), m.value, rhs, tol)];
    let sweep = opts.sweep.as_ref().map(|q| smoothing_sweep(p, ding, q)).transpose()?;
    if let Some(s) = &sweep {
        for (v, e) in s.values.iter().zip(&s.error_estimates) {
            checks.push(CheckResult::le("smoothed_mabuchi_above_minimum", Some(n), rhs - rhs_error - e, *v));
        }
    }
    Ok(ConsistencyReport {
        value: m.value,
        relative_gap: (m.value - rhs) / rhs.abs().max(f64::MIN_POSITIVE),
        mabuchi: m,
        fit_degree: fit.degree,
        fit_residual: fit.residual,
        rhs,
        rhs_unshifted: consistency_rhs_unshifted(ding.chi_volume, ding.vol),
        rhs_error,
        sweep,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantGap {
    /// `[inf M − V log V](P) − [same](ℙⁿ)` with the `nV log π` term.
    pub gap: f64,
    /// `2(χ(ℙⁿ) − χ(P))`, the convention without the `π` term.
    pub gap_unshifted: f64,
    pub invariant: f64,
    pub pn_invariant: f64,
}

/// Gap of Donaldson's invariant over ℙⁿ, from the Ding optimum via the consistency identity.
pub fn donaldson_invariant_gap(p: &RationalPolytope, ding: &DingResult) -> Result<InvariantGap> {
    if !p.barycenter().is_zero() {
        return Err(Error::NotSemistable);
    }
    let n = p.dim();
    let invariant = |chi: f64, vol: f64| -2.0 * chi + n as f64 * vol * PI.ln();
    let pn_vol = to_f64(&pn_volume(n));
    let pn_chi = pn_chi_volume(n);
    let own = invariant(ding.chi_volume, ding.vol);
    let pn = invariant(pn_chi, pn_vol);
    Ok(InvariantGap {
        gap: own - pn,
        gap_unshifted: 2.0 * (pn_chi - ding.chi_volume),
        invariant: own,
        pn_invariant: pn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{builtin, Builtin};

    fn fs(p: &[f64]) -> f64 {
        let g = |t: f64| if t <= 0.0 { 0.0 } else { t * t.ln() };
        g(1.0 + p[0]) + g(1.0 - p[0]) - 2.0 * 2f64.ln()
    }

    #[test]
    fn p1_fubini_study_closed_form() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let u = FnPotential::new(1, fs).with_hessian(|y| vec![2.0 / (1.0 - y[0] * y[0])]);
        let m = donaldson_mabuchi(&u, &p, &Quadrature::default()).unwrap();
        assert!((m.value - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-6, "{m:?}");
        assert!((m.a - 1.0).abs() < 1e-15);
        let rhs = consistency_rhs(pn_chi_volume(1), 2.0, 1);
        assert!((rhs - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn guillemin_matches_fs_on_segment() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let g = GuilleminPotential::new(&p);
        for y in [-0.9, -0.3, 0.0, 0.5] {
            assert!((g.value(&[y]) - 2.0 * 2f64.ln() - fs(&[y])).abs() < 1e-14);
            let h = g.hessian(&[y])[0];
            assert!((h - 2.0 / (1.0 - y * y)).abs() < 1e-12);
            let fd = central_hessian(&g, &[y])[0];
            assert!((fd - h).abs() < 1e-5 * h);
        }
    }

    #[test]
    fn entropic_smoothing_is_convex_and_close() {
        let p = builtin(&Builtin::Pn(2)).unwrap();
        let grid = crate::legendre::DualGrid::new(&p, 6).unwrap();
        let g = GuilleminPotential::new(&p);
        let u = DualGridFunction::from_fn(grid, |y| g.value(y));
        let s = SmoothDualPotential::new(&p, &u, 0.05).unwrap();
        let y = [0.2, -0.1];
        assert!(s.log_det_hessian(&y).unwrap().is_finite());
        assert!((s.value(&y) - g.value(&y)).abs() < 0.2);
        let fd = central_hessian(&s, &y);
        let ex = s.hessian(&y);
        for (a, b) in fd.iter().zip(&ex) {
            assert!((a - b).abs() < 1e-3 * b.abs().max(1.0), "{fd:?} {ex:?}");
        }
    }
}
