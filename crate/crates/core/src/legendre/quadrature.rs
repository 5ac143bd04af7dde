//! Adaptive Gauss–Kronrod quadrature and the generic `∫ e^{−φ}` path for `n ≤ 3`.

use std::collections::BinaryHeap;

use super::cells::{cell_integrals, Domain};
use super::{Integral, MaxAffinePotential};
use crate::error::{Error, Result};
use crate::polytope::RationalPolytope;
use crate::rational::to_f64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel; returns `(kronrod, |kronrod − gauss|)`.
pub fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive bisection until the summed error estimate is below
/// `max(abs_tol, rel_tol·|value|)`.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_panels: usize) -> (f64, f64) {
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, err: e });
    let (mut total, mut err) = (v, e);
    while err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_panels {
        let p = heap.pop().expect("nonempty");
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, err: e2 });
    }
    // resum to shed accumulated cancellation in the running totals
    let (mut v, mut e) = (0.0, 0.0);
    for p in heap.iter() {
        v += p.value;
        e += p.err;
    }
    (v, e)
}

/// `Γ(n, x)` for integer `n ≥ 1`.
pub fn upper_gamma_int(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= x / k as f64;
        sum += term;
    }
    let fact: f64 = (1..n).map(|k| k as f64).product();
    fact * (-x).exp() * sum
}

/// Certified bound for `∫_{‖x‖_∞ > R} e^{−φ}`, from `φ ≥ ρ‖x‖_∞ − C`.
pub fn tail_bound(n: usize, rho: f64, c: f64, r: f64) -> f64 {
    c.exp() * n as f64 * 2f64.powi(n as i32) * upper_gamma_int(n, rho * r) / rho.powi(n as i32)
}

/// Tail constants `(ρ, C)` for a potential whose slope hull contains the origin in its interior.
pub fn tail_constants(phi: &MaxAffinePotential) -> Result<(f64, f64)> {
    let hull = RationalPolytope::from_vertices(phi.slopes().to_vec())
        .map_err(|e| Error::TailDivergence(format!("slopes do not span: {e}")))?;
    if !hull.origin_is_interior() {
        return Err(Error::TailDivergence("0 is not interior to the convex hull of the slopes".into()));
    }
    let rho = to_f64(&hull.axis_inradius());
    let c = phi
        .slopes()
        .iter()
        .zip(phi.intercepts())
        .filter(|(s, _)| hull.vertices().contains(s))
        .map(|(_, c)| *c)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((rho, c))
}

/// Tensor-product adaptive quadrature on `[−R,R]^{n−1}` with the last coordinate in closed
/// form (all of `[−R,R]` adaptively when `n = 1`), plus the certified tail bound.
pub fn integrate_generic(phi: &MaxAffinePotential, tol: f64) -> Result<Integral> {
    let n = phi.dim();
    if n > 3 {
        return Err(Error::Unsupported(format!("integration in dimension {n}")));
    }
    let (rho, c) = tail_constants(phi)?;
    let box_integral = |r: f64| -> Result<(f64, f64)> {
        if n == 1 {
            let f = |x: f64| (-phi.eval(&[x])).exp();
            return Ok(adaptive(f, -r, r, 0.0, 0.05 * tol, 4000));
        }
        nested(phi, &mut Vec::with_capacity(n), r, 0.05 * tol)
    };
    let mut r = 4.0 / rho;
    let (v0, _) = box_integral(r)?;
    while tail_bound(n, rho, c, r) > 0.5 * tol * v0 {
        r *= 2.0;
        if r > 1e6 / rho {
            return Err(Error::TailDivergence("tail bound does not decay".into()));
        }
    }
    let (v, e) = box_integral(r)?;
    let tail = tail_bound(n, rho, c, r);
    Ok(Integral {
        value: v,
        error_bound: e + tail,
    })
}

fn nested(phi: &MaxAffinePotential, prefix: &mut Vec<f64>, r: f64, tol: f64) -> Result<(f64, f64)> {
    let n = phi.dim();
    if prefix.len() == n - 1 {
        let last: Vec<Vec<f64>> = phi.slopes_f64().iter().map(|s| vec![s[n - 1]]).collect();
        let shifted: Vec<f64> = phi
            .slopes_f64()
            .iter()
            .zip(phi.intercepts())
            .map(|(s, c)| c - s[..n - 1].iter().zip(prefix.iter()).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        return cell_integrals(&last, &shifted, &Domain::Whole).map(|ci| (ci.total, 0.0));
    }
    let mut failure = None;
    let mut inner_err = 0.0;
    let res = {
        let f = |x: f64| {
            prefix.push(x);
            let v = match nested(phi, prefix, r, tol) {
                Ok((v, e)) => {
                    inner_err = f64::max(inner_err, e);
                    v
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            };
            prefix.pop();
            v
        };
        adaptive(f, -r, r, 0.0, tol, 2000)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((res.0, res.1 + 2.0 * r * inner_err))
}
