//! Toric Ding functional on a dual grid and its maximization.
//!
//! The decision variables are intercepts `cᵢ` at the nodes `pᵢ` of a [`DualGrid`]; the
//! potential is `φ_c(x) = maxᵢ ⟨pᵢ,x⟩ − cᵢ` and
//!
//! `F(c) = −Σ wᵢ c̃ᵢ / Vol(P) + log ∫ e^{−φ_c} + n·log π`,
//!
//! where `c̃` is the lower convex envelope of `c`. `F` is concave, invariant under
//! `c ↦ c + t·1`, and its supergradient is `μ_φ(Cellᵢ) − wᵢ/Vol(P)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{CheckResult, FanoReport};
use crate::error::{Error, Result};
use crate::mabuchi::{DualPotential, GuilleminPotential};
use crate::legendre::{CellIntegrals, Domain, DualGrid, DualGridFunction};
use crate::polytope::RationalPolytope;
use crate::rational::{factorial_f64, to_f64};

/// Ascent rule used by [`maximize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// Levenberg–Marquardt damped Newton steps on the exact Hessian.
    Newton,
    /// Supergradient steps of length `s₀/√k`.
    Diminishing { s0: f64 },
    /// Polyak steps towards a known optimal value.
    Polyak { target: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DingConfig {
    /// Subdivision factor `K` of the dual grid.
    pub subdivision: usize,
    /// Stop once the supergradient sup-norm falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub step: StepRule,
    /// Seeds the perturbation of the initial point; `0` leaves it unperturbed.
    pub seed: u64,
    /// Amplitude of the seeded perturbation.
    pub jitter: f64,
    /// Also solve on the grid `2K` and extrapolate the value.
    pub extrapolate: bool,
}

impl Default for DingConfig {
    fn default() -> Self {
        Self {
            subdivision: 14,
            tol: 1e-9,
            max_iterations: 200,
            step: StepRule::Newton,
            seed: 0,
            jitter: 0.0,
            extrapolate: true,
        }
    }
}

/// Value of one grid solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSolve {
    pub subdivision: usize,
    pub nodes: usize,
    pub f_value: f64,
    pub ke_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DingResult {
    pub dim: usize,
    pub vol: f64,
    /// Maximal value of the Ding objective (extrapolated when two grids were solved).
    #[serde(rename = "F_star")]
    pub f_star: f64,
    pub chi_volume: f64,
    pub height: f64,
    /// Uncertainty on `height`: extrapolation gap plus quadrature error.
    pub height_error: f64,
    pub ke_residual: f64,
    pub iterations: usize,
    pub certified: bool,
    pub solves: Vec<GridSolve>,
    /// Objective values of accepted iterates on the finest grid.
    pub trace: Vec<f64>,
    /// Optimal dual values (lower convex envelope) on the finest grid.
    #[serde(skip)]
    pub solution: Option<DualGridFunction>,
}

impl DingResult {
    fn from_value(dim: usize, vol: f64, f_star: f64) -> (f64, f64) {
        let chi = vol * f_star / 2.0;
        (chi, factorial_f64(dim as u32 + 1) * chi)
    }

    /// `χ/vol`, the representation-independent normalized height.
    pub fn chi_norm(&self) -> f64 {
        self.f_star / 2.0
    }
}

/// A polytope with its dual grid; evaluates the objective and its derivatives.
#[derive(Clone, Debug)]
pub struct DingProblem {
    grid: Arc<DualGrid>,
    vol: f64,
    weights: Vec<f64>,
}

impl DingProblem {
    pub fn new(p: &RationalPolytope, subdivision: usize) -> Result<Self> {
        if !p.barycenter().is_zero() {
            return Err(Error::NotSemistable);
        }
        Self::unchecked(p, subdivision)
    }

    fn unchecked(p: &RationalPolytope, subdivision: usize) -> Result<Self> {
        if p.dim() > 2 {
            return Err(Error::Unsupported(format!("Ding maximization in dimension {}", p.dim())));
        }
        let grid = DualGrid::new(p, subdivision)?;
        let vol = to_f64(&grid.volume);
        let weights = grid.weights_f64.iter().map(|w| w / vol).collect();
        Ok(Self { grid, vol, weights })
    }

    pub fn grid(&self) -> &Arc<DualGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Normalized weights `wᵢ/Vol(P)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: c.len(),
            });
        }
        Ok(())
    }

    fn cells(&self, c: &[f64]) -> Result<CellIntegrals> {
        self.check_len(c)?;
        crate::legendre::cell_integrals(&self.grid.nodes_f64, c, &Domain::Whole)
    }

    fn weighted(&self, c: &[f64]) -> f64 {
        self.weights.iter().zip(c).map(|(w, v)| w * v).sum()
    }

    /// `−Σ wᵢcᵢ/V + log ∫e^{−φ_c} + n log π` without the envelope projection.
    pub fn raw_objective(&self, c: &[f64]) -> Result<f64> {
        let ci = self.cells(c)?;
        Ok(self.value_from(c, &ci))
    }

    fn value_from(&self, c: &[f64], ci: &CellIntegrals) -> f64 {
        -self.weighted(c) + ci.total.ln() + self.dim() as f64 * PI.ln()
    }

    /// Lower convex envelope of `c` over the nodes, `c̃ᵢ = φ_c*(pᵢ)`.
    pub fn envelope(&self, c: &[f64]) -> Result<Vec<f64>> {
        let ci = self.cells(c)?;
        Ok(self.envelope_from(c, &ci))
    }

    fn envelope_from(&self, c: &[f64], ci: &CellIntegrals) -> Vec<f64> {
        let phi = |x: &[f64]| {
            self.grid
                .nodes_f64
                .iter()
                .zip(c)
                .map(|(p, ci)| dot(p, x) - ci)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let verts: Vec<(Vec<f64>, f64)> = ci.vertices.iter().map(|x| (x.clone(), phi(x))).collect();
        self.grid
            .nodes_f64
            .iter()
            .zip(c)
            .map(|(p, &ci)| {
                let hull = verts.iter().map(|(x, f)| dot(p, x) - f).fold(f64::NEG_INFINITY, f64::max);
                hull.min(ci)
            })
            .collect()
    }

    /// The objective `F(c)`; the linear term sees only the envelope of `c`.
    pub fn objective(&self, c: &[f64]) -> Result<f64> {
        let ci = self.cells(c)?;
        let env = self.envelope_from(c, &ci);
        Ok(self.value_from(&env, &ci))
    }

    /// `μ_φ(Cellᵢ) − wᵢ/V`; sums to zero.
    pub fn subgradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        let ci = self.cells(c)?;
        Ok(self.gradient_from(&ci))
    }

    fn gradient_from(&self, ci: &CellIntegrals) -> Vec<f64> {
        ci.masses.iter().zip(&self.weights).map(|(m, w)| m / ci.total - w).collect()
    }

    /// Hessian of the raw objective: `diag(μ) − μμᵀ − L/Z` with `L` the flux Laplacian.
    fn hessian_from(&self, ci: &CellIntegrals) -> DMatrix<f64> {
        let m = self.len();
        let z = ci.total;
        let mu: Vec<f64> = ci.masses.iter().map(|x| x / z).collect();
        let mut h = DMatrix::from_fn(m, m, |i, j| -mu[i] * mu[j]);
        for i in 0..m {
            h[(i, i)] += mu[i];
        }
        for &(i, j, f) in &ci.fluxes {
            let f = f / z;
            h[(i, j)] += f;
            h[(j, i)] += f;
            h[(i, i)] -= f;
            h[(j, j)] -= f;
        }
        h
    }

    /// Removes the constant gauge: `Σ wᵢcᵢ = 0`.
    pub fn normalize(&self, c: &mut [f64]) {
        let mean = self.weighted(c);
        c.iter_mut().for_each(|v| *v -= mean);
    }

    /// Starting intercepts: Guillemin's potential at the nodes.
    pub fn initial_point(&self, p: &RationalPolytope) -> Vec<f64> {
        let g = GuilleminPotential::new(p);
        let mut c: Vec<f64> = self.grid.nodes_f64.iter().map(|y| g.value(y)).collect();
        self.normalize(&mut c);
        c
    }

    /// Solves the discrete problem on this grid from `c`.
    pub fn solve(&self, mut c: Vec<f64>, cfg: &DingConfig) -> Result<(Vec<f64>, GridSolve, Vec<f64>)> {
        self.check_len(&c)?;
        self.normalize(&mut c);
        let mut ci = self.cells(&c)?;
        let mut value = self.value_from(&c, &ci);
        let mut trace = vec![value];
        let mut lambda = 1e-3;
        let mut iterations = 0;
        let mut best = (value, c.clone());
        let residual = |g: &[f64]| g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut g = self.gradient_from(&ci);
        while residual(&g) >= cfg.tol && iterations < cfg.max_iterations {
            iterations += 1;
            match cfg.step {
                StepRule::Newton => {
                    let h = self.hessian_from(&ci);
                    let gv = DVector::from_column_slice(&g);
                    let mut accepted = false;
                    for _ in 0..60 {
                        let mut a = -&h;
                        for i in 0..self.len() {
                            a[(i, i)] += lambda * self.weights[i];
                        }
                        let Some(chol) = a.cholesky() else {
                            lambda *= 4.0;
                            continue;
                        };
                        let d = chol.solve(&gv);
                        let mut trial: Vec<f64> = c.iter().zip(d.iter()).map(|(x, y)| x + y).collect();
                        self.normalize(&mut trial);
                        let Ok(tci) = self.cells(&trial) else {
                            lambda *= 4.0;
                            continue;
                        };
                        let tv = self.value_from(&trial, &tci);
                        if tv >= value - 1e-14 * value.abs().max(1.0) {
                            c = trial;
                            ci = tci;
                            value = tv;
                            lambda = (lambda / 5.0).max(1e-12);
                            accepted = true;
                            break;
                        }
                        lambda *= 4.0;
                    }
                    if !accepted {
                        break;
                    }
                }
                StepRule::Diminishing { s0 } => {
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let s = s0 / (iterations as f64).sqrt() / norm;
                    c.iter_mut().zip(&g).for_each(|(x, gi)| *x += s * gi);
                    self.normalize(&mut c);
                    ci = self.cells(&c)?;
                    value = self.value_from(&c, &ci);
                }
                StepRule::Polyak { target } => {
                    let norm2 = g.iter().map(|x| x * x).sum::<f64>();
                    let s = (target - value).max(0.0) / norm2;
                    c.iter_mut().zip(&g).for_each(|(x, gi)| *x += s * gi);
                    self.normalize(&mut c);
                    ci = self.cells(&c)?;
                    value = self.value_from(&c, &ci);
                }
            }
            g = self.gradient_from(&ci);
            trace.push(value);
            if value > best.0 {
                best = (value, c.clone());
            }
        }
        let ke_residual = residual(&g);
        let converged = ke_residual < cfg.tol;
        if !converged && best.0 > value {
            c = best.1;
            ci = self.cells(&c)?;
        }
        let env = self.envelope_from(&c, &ci);
        let f_value = self.value_from(&env, &ci);
        let solve = GridSolve {
            subdivision: self.grid.subdivision,
            nodes: self.len(),
            f_value,
            ke_residual: residual(&self.gradient_from(&ci)),
            iterations,
            converged,
        };
        Ok((env, solve, trace))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F(c)` on the grid of subdivision `cfg.subdivision`.
pub fn ding_objective(c: &[f64], p: &RationalPolytope, cfg: &DingConfig) -> Result<f64> {
    DingProblem::new(p, cfg.subdivision)?.objective(c)
}

/// `μ_φ(Cellᵢ) − wᵢ/Vol(P)` on the grid of subdivision `cfg.subdivision`.
pub fn ding_subgradient(c: &[f64], p: &RationalPolytope, cfg: &DingConfig) -> Result<Vec<f64>> {
    DingProblem::new(p, cfg.subdivision)?.subgradient(c)
}

fn jittered(problem: &DingProblem, p: &RationalPolytope, cfg: &DingConfig) -> Vec<f64> {
    let mut c = problem.initial_point(p);
    if cfg.seed != 0 && cfg.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        c.iter_mut().for_each(|v| *v += cfg.jitter * rng.random_range(-1.0..1.0));
    }
    c
}

/// Maximizes the Ding objective; with `cfg.extrapolate`, on grids `K` and `2K` followed by
/// Richardson extrapolation of order two.
pub fn maximize(p: &RationalPolytope, cfg: &DingConfig) -> Result<DingResult> {
    if !p.barycenter().is_zero() {
        return Err(Error::NotSemistable);
    }
    let n = p.dim();
    let coarse = DingProblem::new(p, cfg.subdivision)?;
    let (env, s1, trace1) = coarse.solve(jittered(&coarse, p, cfg), cfg)?;
    let mut solves = vec![s1];
    let mut trace = trace1;
    let mut solution = DualGridFunction::new(coarse.grid().clone(), env)?;
    let mut f_star = solves[0].f_value;
    let mut gap = 0.0;
    if cfg.extrapolate {
        let fine = DingProblem::new(p, 2 * cfg.subdivision)?;
        let (env2, s2, trace2) = fine.solve(jittered(&fine, p, cfg), cfg)?;
        let (f1, f2) = (solves[0].f_value, s2.f_value);
        f_star = f2 + (f2 - f1) / 3.0;
        gap = (f_star - f2).abs();
        solves.push(s2);
        trace = trace2;
        solution = DualGridFunction::new(fine.grid().clone(), env2)?;
    }
    let vol = coarse.vol;
    let (chi_volume, height) = DingResult::from_value(n, vol, f_star);
    let last = solves.last().expect("at least one solve");
    let converged = solves.iter().all(|s| s.converged);
    let quadrature = 64.0 * f64::EPSILON * last.nodes as f64;
    Ok(DingResult {
        dim: n,
        vol,
        f_star,
        chi_volume,
        height,
        height_error: factorial_f64(n as u32 + 1) * vol / 2.0 * (gap + quadrature),
        ke_residual: last.ke_residual,
        iterations: solves.iter().map(|s| s.iterations).sum(),
        certified: converged,
        trace,
        solves,
        solution: Some(solution),
    })
}

/// `χ ≤ universal bound`, `ke_lower ≤ height ≤ ke_upper` and `height ≤ pn_height(n)`.
pub fn verify_bounds(result: &DingResult, report: &FanoReport) -> Vec<CheckResult> {
    let n = Some(report.dim);
    let b = &report.bounds;
    let slack = result.height_error;
    vec![
        CheckResult::le("chi_volume_below_universal_bound", n, result.chi_volume, b.universal_upper),
        CheckResult::le("ke_lower_below_height", n, b.ke_lower, result.height + slack),
        CheckResult::le("height_below_ke_upper", n, result.height - slack, b.ke_upper),
        CheckResult::le("height_below_pn_height", n, result.height - slack, b.pn_height * (1.0 + 1e-12)),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearEquivalence {
    pub det: f64,
    pub base: f64,
    pub image: f64,
    pub measured_delta: f64,
    pub predicted_delta: f64,
}

/// Normalized heights of `P` and `A·P` from two optimizer runs against `−½log|det A|`.
pub fn linear_equivalence_experiment(p: &RationalPolytope, a: &[Vec<crate::rational::Rational>], cfg: &DingConfig) -> Result<LinearEquivalence> {
    let det = crate::rational::determinant(a);
    if num_traits::Zero::is_zero(&det) {
        return Err(Error::SingularMatrix);
    }
    let image = p.linear_image(a)?;
    let base = maximize(p, cfg)?.chi_norm();
    let moved = maximize(&image, cfg)?.chi_norm();
    let det = to_f64(&det);
    Ok(LinearEquivalence {
        det,
        base,
        image: moved,
        measured_delta: moved - base,
        predicted_delta: -0.5 * det.abs().ln(),
    })
}

/// Ascent trace on a polytope whose barycenter need not vanish.
#[derive(Clone, Debug, Serialize)]
pub struct UnboundedDiagnostic {
    pub barycenter_norm: f64,
    pub values: Vec<f64>,
    /// Least-squares slope of the values per iteration.
    pub growth_rate: f64,
    pub appears_unbounded: bool,
}

/// Runs `iterations` supergradient steps without the semistability check and reports the trend.
pub fn unbounded_diagnostic(p: &RationalPolytope, subdivision: usize, iterations: usize) -> Result<UnboundedDiagnostic> {
    let problem = DingProblem::unchecked(p, subdivision)?;
    let bary = p.barycenter().to_f64();
    let barycenter_norm = dot(&bary, &bary).sqrt();
    let mut c = problem.initial_point(p);
    let mut values = Vec::with_capacity(iterations + 1);
    for k in 0..=iterations {
        let ci = problem.cells(&c)?;
        values.push(problem.value_from(&c, &ci));
        if k == iterations {
            break;
        }
        let g = problem.gradient_from(&ci);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().zip(&g).for_each(|(x, gi)| *x += gi / norm);
        problem.normalize(&mut c);
    }
    let m = values.len() as f64;
    let xm = (m - 1.0) / 2.0;
    let ym = values.iter().sum::<f64>() / m;
    let (num, den) = values.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, y)| {
        let dx = i as f64 - xm;
        (a + dx * (y - ym), b + dx * dx)
    });
    let growth_rate = if den > 0.0 { num / den } else { 0.0 };
    let tail = &values[values.len() / 2..];
    let still_rising = tail.windows(2).filter(|w| w[1] > w[0]).count() * 4 >= tail.len().saturating_sub(1) * 3;
    Ok(UnboundedDiagnostic {
        barycenter_norm,
        appears_unbounded: barycenter_norm > 0.0 && growth_rate > 0.0 && still_rising,
        values,
        growth_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{builtin, Builtin};

    #[test]
    fn p1_objective_closed_forms() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let cfg = DingConfig {
            subdivision: 400,
            ..Default::default()
        };
        let prob = DingProblem::new(&p, 400).unwrap();
        let zero = vec![0.0; prob.len()];
        let f0 = prob.objective(&zero).unwrap();
        assert!((f0 - (2f64.ln() + PI.ln())).abs() < 1e-12, "{f0}");
        let fs = |t: f64| {
            let g = |s: f64| if s <= 0.0 { 0.0 } else { s * s.ln() };
            g(1.0 + t) + g(1.0 - t) - 2.0 * 2f64.ln()
        };
        let c: Vec<f64> = prob.grid().nodes_f64.iter().map(|y| fs(y[0])).collect();
        let f = ding_objective(&c, &p, &cfg).unwrap();
        assert!((f - (1.0 + PI.ln())).abs() < 1e-3, "{f}");
    }

    #[test]
    fn gauge_invariance_and_gradient_sum() {
        let p = builtin(&Builtin::Pn(2)).unwrap();
        let prob = DingProblem::new(&p, 4).unwrap();
        let c = prob.initial_point(&p);
        let f = prob.objective(&c).unwrap();
        for t in [-3.0, 0.5, 7.25] {
            let shifted: Vec<f64> = c.iter().map(|x| x + t).collect();
            assert!((prob.objective(&shifted).unwrap() - f).abs() < 1e-12);
        }
        let g = prob.subgradient(&c).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn newton_converges_and_is_monotone() {
        let p = builtin(&Builtin::Pn(1)).unwrap();
        let cfg = DingConfig {
            subdivision: 50,
            extrapolate: false,
            ..Default::default()
        };
        let r = maximize(&p, &cfg).unwrap();
        assert!(r.certified && r.ke_residual < 1e-9);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!((r.height - factorial_f64(2) * r.chi_volume).abs() == 0.0);
    }

    #[test]
    fn refinement_is_monotone() {
        let p = builtin(&Builtin::Pn(2)).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in [2, 4, 8] {
            let cfg = DingConfig {
                subdivision: k,
                extrapolate: false,
                ..Default::default()
            };
            let f = maximize(&p, &cfg).unwrap().f_star;
            assert!(f >= prev - 1e-10, "{k}: {f} < {prev}");
            prev = f;
        }
    }

    #[test]
    fn non_semistable_is_rejected_and_diverges() {
        let p = builtin(&Builtin::Bl1P2).unwrap();
        assert!(matches!(maximize(&p, &DingConfig::default()), Err(Error::NotSemistable)));
        let d = unbounded_diagnostic(&p, 3, 40).unwrap();
        assert!(d.appears_unbounded, "{d:?}");
    }
}
