//! Exact integration of `e^{−φ}` for max-affine `φ` in one and two dimensions.
//!
//! Each argmax cell `{x : ⟨pᵢ,x⟩ − cᵢ ≥ ⟨pⱼ,x⟩ − cⱼ ∀j}` is built by clipping in homogeneous
//! coordinates, so unbounded cells are represented exactly with points at infinity. On its
//! cell `e^{−φ} = e^{gᵢ}` with `gᵢ(x) = cᵢ − ⟨pᵢ,x⟩` affine, and every piece (triangle, cone,
//! half-strip, edge, ray) has a closed-form integral in terms of divided differences of exp.

use rayon::prelude::*;

use super::expdd::exp_dd;
use crate::error::{Error, Result};

/// Region of integration.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Whole,
    Interval(f64, f64),
    /// Counter-clockwise convex polygon.
    Polygon(Vec<[f64; 2]>),
}

/// Per-cell integrals of `e^{−φ}` over a domain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellIntegrals {
    pub total: f64,
    /// `∫_{Cellᵢ} e^{−φ}`.
    pub masses: Vec<f64>,
    /// `∫ x e^{−φ}` over the whole domain.
    pub moment: Vec<f64>,
    /// `(i, j, ∫_{Cellᵢ∩Cellⱼ} e^{−φ} ds / |pᵢ − pⱼ|)` for adjacent cells, `i < j`.
    pub fluxes: Vec<(usize, usize, f64)>,
    /// Finite vertices of the cell complex (including domain corners).
    pub vertices: Vec<Vec<f64>>,
}

pub fn cell_integrals(slopes: &[Vec<f64>], intercepts: &[f64], domain: &Domain) -> Result<CellIntegrals> {
    assert_eq!(slopes.len(), intercepts.len());
    let out = match slopes.first().map(Vec::len) {
        Some(1) => cells_1d(slopes, intercepts, domain),
        Some(2) => cells_2d(slopes, intercepts, domain),
        Some(n) => Err(Error::Unsupported(format!("exact cell integration in dimension {n}"))),
        None => Err(Error::BadParams("max-affine potential has no pieces".into())),
    }?;
    let finite = out.total.is_finite()
        && out.masses.iter().all(|m| m.is_finite())
        && out.moment.iter().all(|m| m.is_finite())
        && out.fluxes.iter().all(|f| f.2.is_finite());
    if !finite {
        return Err(Error::Numerical("non-finite cell integral".into()));
    }
    Ok(out)
}

/// Whether piece `i` loses to an identical-slope piece `j` everywhere.
fn dominated(ci: f64, cj: f64, i: usize, j: usize) -> bool {
    ci > cj || (ci == cj && j < i)
}

fn cells_1d(slopes: &[Vec<f64>], c: &[f64], domain: &Domain) -> Result<CellIntegrals> {
    let m = slopes.len();
    let p: Vec<f64> = slopes.iter().map(|s| s[0]).collect();
    let (lo, hi) = match domain {
        Domain::Whole => (f64::NEG_INFINITY, f64::INFINITY),
        Domain::Interval(a, b) => (*a, *b),
        Domain::Polygon(_) => return Err(Error::BadParams("polygon domain in dimension 1".into())),
    };
    let mut out = CellIntegrals {
        masses: vec![0.0; m],
        moment: vec![0.0],
        ..Default::default()
    };
    let mut intervals: Vec<(f64, f64, usize)> = Vec::new();
    for i in 0..m {
        let (mut l, mut r) = (lo, hi);
        let mut empty = false;
        for j in 0..m {
            if j == i {
                continue;
            }
            let a = p[i] - p[j];
            let b = c[i] - c[j];
            if a > 0.0 {
                l = l.max(b / a);
            } else if a < 0.0 {
                r = r.min(b / a);
            } else if dominated(c[i], c[j], i, j) {
                empty = true;
                break;
            }
        }
        if empty || l >= r {
            continue;
        }
        let g = |x: f64| c[i] - p[i] * x;
        let (mass, mom) = match (l.is_finite(), r.is_finite()) {
            (true, true) => {
                let (gl, gr) = (g(l), g(r));
                let len = r - l;
                (
                    len * exp_dd(&[gl, gr]),
                    len * (l * exp_dd(&[gl, gl, gr]) + r * exp_dd(&[gr, gl, gr])),
                )
            }
            (true, false) => {
                if p[i] <= 0.0 {
                    return Err(Error::TailDivergence(format!("piece {i} is maximal towards +∞ with slope {}", p[i])));
                }
                let e = g(l).exp();
                (e / p[i], e * (l / p[i] + 1.0 / (p[i] * p[i])))
            }
            (false, true) => {
                if p[i] >= 0.0 {
                    return Err(Error::TailDivergence(format!("piece {i} is maximal towards −∞ with slope {}", p[i])));
                }
                let q = -p[i];
                let e = g(r).exp();
                (e / q, e * (r / q - 1.0 / (q * q)))
            }
            (false, false) => {
                return Err(Error::TailDivergence("a single piece is maximal on the whole line".into()));
            }
        };
        out.masses[i] = mass;
        out.moment[0] += mom;
        intervals.push((l, r, i));
        for x in [l, r] {
            if x.is_finite() {
                out.vertices.push(vec![x]);
            }
        }
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in intervals.windows(2) {
        let (_, r, i) = w[0];
        let (_, _, j) = w[1];
        let flux = (c[i] - p[i] * r).exp() / (p[i] - p[j]).abs();
        out.fluxes.push((i.min(j), i.max(j), flux));
    }
    out.total = out.masses.iter().sum();
    Ok(out)
}

/// Homogeneous point: `w = 1` finite, `w = 0` a unit direction at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Hp {
    x: f64,
    y: f64,
    w: f64,
}

impl Hp {
    fn finite(x: f64, y: f64) -> Self {
        Hp { x, y, w: 1.0 }
    }

    fn ideal(x: f64, y: f64) -> Self {
        let n = x.hypot(y);
        Hp { x: x / n, y: y / n, w: 0.0 }
    }

    fn is_ideal(&self) -> bool {
        self.w == 0.0
    }

    fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Normalizes `αP + βQ` back to one of the two canonical forms.
    fn combine(alpha: f64, p: Hp, beta: f64, q: Hp) -> Hp {
        let w = alpha * p.w + beta * q.w;
        let x = alpha * p.x + beta * q.x;
        let y = alpha * p.y + beta * q.y;
        // a point beyond ~1e9 of the origin is numerically at infinity
        if w > 1e-9 * x.hypot(y) {
            Hp::finite(x / w, y / w)
        } else {
            Hp::ideal(x, y)
        }
    }

    fn same(&self, o: &Hp) -> bool {
        if self.is_ideal() != o.is_ideal() {
            return false;
        }
        let scale = if self.is_ideal() { 1.0 } else { 1.0 + self.x.abs().max(self.y.abs()) };
        (self.x - o.x).abs() <= 1e-12 * scale && (self.y - o.y).abs() <= 1e-12 * scale
    }
}

#[derive(Clone, Copy, Debug)]
struct Vtx {
    p: Hp,
    /// Constraint index of the edge starting at this vertex, if any.
    label: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Line {
    a: [f64; 2],
    b: f64,
}

impl Line {
    fn eval(&self, p: &Hp) -> f64 {
        self.a[0] * p.x + self.a[1] * p.y - self.b * p.w
    }

    fn foot(&self) -> Hp {
        let n2 = self.a[0] * self.a[0] + self.a[1] * self.a[1];
        Hp::finite(self.b * self.a[0] / n2, self.b * self.a[1] / n2)
    }
}

/// Sutherland–Hodgman step keeping `{⟨a,x⟩ ≥ b}`.
fn clip(poly: &[Vtx], line: Line, label: usize) -> Vec<Vtx> {
    let k = poly.len();
    let mut out = Vec::with_capacity(k + 2);
    for idx in 0..k {
        let cur = poly[idx];
        let next = poly[(idx + 1) % k];
        let hc = line.eval(&cur.p);
        let hn = line.eval(&next.p);
        match (hc >= 0.0, hn >= 0.0) {
            (true, true) => out.push(next),
            (true, false) => out.push(Vtx {
                p: Hp::combine(-hn, cur.p, hc, next.p),
                label: Some(label),
            }),
            (false, true) => {
                out.push(Vtx {
                    p: Hp::combine(hn, cur.p, -hc, next.p),
                    label: cur.label,
                });
                out.push(next);
            }
            (false, false) => {}
        }
    }
    dedupe(&mut out);
    out
}

fn dedupe(v: &mut Vec<Vtx>) {
    let mut out: Vec<Vtx> = Vec::with_capacity(v.len());
    for x in v.drain(..) {
        match out.last_mut() {
            Some(last) if last.p.same(&x.p) => *last = x,
            _ => out.push(x),
        }
    }
    while out.len() > 1 && out[out.len() - 1].p.same(&out[0].p) {
        out.pop();
    }
    *v = out;
}

/// Inserts a finite point between consecutive antipodal points at infinity, so every edge
/// between two ideal points is a genuine arc at infinity.
fn insert_feet(v: &mut Vec<Vtx>, lines: &impl Fn(usize) -> Line) {
    let k = v.len();
    if k < 2 {
        return;
    }
    let mut out = Vec::with_capacity(k + 1);
    for idx in 0..k {
        let cur = v[idx];
        let next = v[(idx + 1) % k];
        out.push(cur);
        if cur.p.is_ideal() && next.p.is_ideal() {
            let cross = cur.p.x * next.p.y - cur.p.y * next.p.x;
            let dot = cur.p.x * next.p.x + cur.p.y * next.p.y;
            if cross.abs() <= 1e-12 && dot < 0.0 {
                if let Some(l) = cur.label {
                    out.push(Vtx {
                        p: lines(l).foot(),
                        label: cur.label,
                    });
                }
            }
        }
    }
    *v = out;
}

fn det2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

struct CellResult {
    mass: f64,
    moment: [f64; 2],
    /// (neighbor, ∫_edge e^{g} ds) before dividing by |pᵢ − pⱼ|.
    edges: Vec<(usize, f64)>,
    vertices: Vec<[f64; 2]>,
}

fn cells_2d(slopes: &[Vec<f64>], c: &[f64], domain: &Domain) -> Result<CellIntegrals> {
    let m = slopes.len();
    let p: Vec<[f64; 2]> = slopes.iter().map(|s| [s[0], s[1]]).collect();
    let start: Vec<Vtx> = match domain {
        Domain::Whole => [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
            .iter()
            .map(|&(x, y)| Vtx {
                p: Hp::ideal(x, y),
                label: None,
            })
            .collect(),
        Domain::Polygon(pts) => pts
            .iter()
            .map(|q| Vtx {
                p: Hp::finite(q[0], q[1]),
                label: None,
            })
            .collect(),
        Domain::Interval(..) => return Err(Error::BadParams("interval domain in dimension 2".into())),
    };
    let results: Vec<Result<Option<CellResult>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let lines = |j: usize| Line {
                a: [p[i][0] - p[j][0], p[i][1] - p[j][1]],
                b: c[i] - c[j],
            };
            let mut poly = start.clone();
            for j in 0..m {
                if j == i {
                    continue;
                }
                let line = lines(j);
                if line.a == [0.0, 0.0] {
                    if dominated(c[i], c[j], i, j) {
                        return Ok(None);
                    }
                    continue;
                }
                poly = clip(&poly, line, j);
                if poly.len() < 2 {
                    return Ok(None);
                }
                insert_feet(&mut poly, &lines);
            }
            integrate_cell(&poly, p[i], c[i], i)
        })
        .collect();
    let mut out = CellIntegrals {
        masses: vec![0.0; m],
        moment: vec![0.0; 2],
        ..Default::default()
    };
    let mut edge_maps: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut nondegenerate = vec![false; m];
    for (i, r) in results.into_iter().enumerate() {
        let Some(cell) = r? else { continue };
        out.masses[i] = cell.mass;
        out.moment[0] += cell.moment[0];
        out.moment[1] += cell.moment[1];
        out.vertices.extend(cell.vertices.iter().map(|v| v.to_vec()));
        nondegenerate[i] = cell.mass > 0.0;
        edge_maps[i] = cell.edges;
    }
    out.total = out.masses.iter().sum();
    let floor = out.total * 1e-15;
    for i in 0..m {
        if !nondegenerate[i] || out.masses[i] <= floor {
            continue;
        }
        for &(j, integral) in &edge_maps[i] {
            if j > i && nondegenerate[j] && out.masses[j] > floor && integral > 0.0 {
                let d = sub(p[i], p[j]);
                let flux = integral / dot2(d, d).sqrt();
                match out.fluxes.last_mut() {
                    Some(last) if last.0 == i && last.1 == j => last.2 += flux,
                    _ => out.fluxes.push((i, j, flux)),
                }
            }
        }
    }
    Ok(out)
}

fn integrate_cell(poly: &[Vtx], p: [f64; 2], c: f64, i: usize) -> Result<Option<CellResult>> {
    if poly.len() < 2 {
        return Ok(None);
    }
    let g = |x: [f64; 2]| c - dot2(p, x);
    let k = poly.len();
    let mut res = CellResult {
        mass: 0.0,
        moment: [0.0; 2],
        edges: Vec::new(),
        vertices: poly.iter().filter(|v| !v.p.is_ideal()).map(|v| v.p.xy()).collect(),
    };
    let diverge = || Error::TailDivergence(format!("cell of piece {i} is unbounded in a direction where the potential does not grow"));

    // edge integrals
    for idx in 0..k {
        let a = poly[idx];
        let b = poly[(idx + 1) % k];
        let Some(j) = a.label else { continue };
        let integral = match (a.p.is_ideal(), b.p.is_ideal()) {
            (false, false) => {
                let d = sub(b.p.xy(), a.p.xy());
                dot2(d, d).sqrt() * exp_dd(&[g(a.p.xy()), g(b.p.xy())])
            }
            (false, true) | (true, false) => {
                let (f, d) = if a.p.is_ideal() { (b.p, a.p) } else { (a.p, b.p) };
                let rate = dot2(p, d.xy());
                if rate <= 0.0 {
                    return Err(diverge());
                }
                g(f.xy()).exp() / rate
            }
            (true, true) => continue,
        };
        res.edges.push((j, integral));
    }

    let ideal: Vec<bool> = poly.iter().map(|v| v.p.is_ideal()).collect();
    if !ideal.iter().any(|&b| b) {
        let v0 = poly[0].p.xy();
        for t in 1..k.saturating_sub(1) {
            add_triangle(&mut res, [v0, poly[t].p.xy(), poly[t + 1].p.xy()], &g);
        }
        return Ok(Some(res));
    }
    if ideal.iter().all(|&b| b) {
        return Err(diverge());
    }
    // rotate so the list starts at the first finite point after the ideal block
    let s = (0..k).find(|&t| !ideal[t] && ideal[(t + k - 1) % k]).expect("mixed cyclic list");
    let order: Vec<Hp> = (0..k).map(|t| poly[(s + t) % k].p).collect();
    let nf = order.iter().take_while(|v| !v.is_ideal()).count();
    if order[nf..].iter().any(|v| !v.is_ideal()) {
        return Err(diverge());
    }
    let fin: Vec<[f64; 2]> = order[..nf].iter().map(Hp::xy).collect();
    let dirs: Vec<[f64; 2]> = order[nf..].iter().map(Hp::xy).collect();
    for d in &dirs {
        if dot2(p, *d) <= 0.0 {
            return Err(diverge());
        }
    }
    let f1 = fin[0];
    let e1 = g(f1).exp();
    for t in 1..nf.saturating_sub(1) {
        add_triangle(&mut res, [f1, fin[t], fin[t + 1]], &g);
    }
    if nf >= 2 {
        let w = sub(fin[nf - 1], f1);
        let d = dirs[0];
        let jac = det2(w, d).abs();
        let a = dot2(p, w);
        let beta = dot2(p, d);
        let g1 = g(f1);
        let e0 = exp_dd(&[g1, g1 - a]);
        let e1s = exp_dd(&[g1 - a, g1 - a, g1]);
        res.mass += jac * e0 / beta;
        for k2 in 0..2 {
            res.moment[k2] += jac * (f1[k2] * e0 / beta + w[k2] * e1s / beta + d[k2] * e0 / (beta * beta));
        }
    }
    for t in 0..dirs.len().saturating_sub(1) {
        let (u, v) = (dirs[t], dirs[t + 1]);
        let jac = det2(u, v).abs();
        let (al, be) = (dot2(p, u), dot2(p, v));
        res.mass += jac * e1 / (al * be);
        for k2 in 0..2 {
            res.moment[k2] += jac * e1 * (f1[k2] / (al * be) + u[k2] / (al * al * be) + v[k2] / (al * be * be));
        }
    }
    Ok(Some(res))
}

fn add_triangle(res: &mut CellResult, t: [[f64; 2]; 3], g: &impl Fn([f64; 2]) -> f64) {
    let area2 = det2(sub(t[1], t[0]), sub(t[2], t[0])).abs();
    if area2 == 0.0 {
        return;
    }
    let gs = [g(t[0]), g(t[1]), g(t[2])];
    res.mass += area2 * exp_dd(&gs);
    for (k, v) in t.iter().enumerate() {
        let w = area2 * exp_dd(&[gs[k], gs[0], gs[1], gs[2]]);
        res.moment[0] += w * v[0];
        res.moment[1] += w * v[1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn abs_value_on_line() {
        let r = cell_integrals(&[vec![-1.0], vec![1.0]], &[0.0, 0.0], &Domain::Whole).unwrap();
        assert!(close(r.total, 2.0, 1e-15));
        assert!(r.moment[0].abs() < 1e-15);
        assert_eq!(r.fluxes.len(), 1);
        assert!(close(r.fluxes[0].2, 0.5, 1e-15));
    }

    #[test]
    fn square_support_function() {
        // ψ for [−1,1]²: ∫ e^{−max(|x|,|y|)} = 2!·Vol(cross-polytope) = 4
        let slopes = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
        let r = cell_integrals(&slopes, &[0.0; 4], &Domain::Whole).unwrap();
        assert!(close(r.total, 4.0, 1e-14), "{}", r.total);
        for m in &r.masses {
            assert!(close(*m, 1.0, 1e-14));
        }
        assert!(r.moment.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn p2_support_function() {
        // P* of conv{(−1,−1),(2,−1),(−1,2)} is conv{(1,0),(0,1),(−1,−1)} with volume 3/2
        let slopes = vec![vec![-1.0, -1.0], vec![2.0, -1.0], vec![-1.0, 2.0]];
        let r = cell_integrals(&slopes, &[0.0; 3], &Domain::Whole).unwrap();
        assert!(close(r.total, 3.0, 1e-14), "{}", r.total);
    }

    #[test]
    fn shifted_intercepts_scale_mass() {
        let slopes = vec![vec![-1.0, -1.0], vec![2.0, -1.0], vec![-1.0, 2.0], vec![0.0, 0.0]];
        let c = [0.0, 0.0, 0.0, -0.5];
        let a = cell_integrals(&slopes, &c, &Domain::Whole).unwrap();
        let c2: Vec<f64> = c.iter().map(|x| x + 0.75).collect();
        let b = cell_integrals(&slopes, &c2, &Domain::Whole).unwrap();
        assert!(close(b.total, a.total * 0.75f64.exp(), 1e-13));
    }

    #[test]
    fn fluxes_match_finite_differences() {
        let slopes = vec![vec![-1.0, -1.0], vec![2.0, -1.0], vec![-1.0, 2.0], vec![0.0, 0.0], vec![0.5, 0.25]];
        let c = [0.0, 0.1, -0.2, -0.6, -0.3];
        let base = cell_integrals(&slopes, &c, &Domain::Whole).unwrap();
        let h = 1e-6;
        for j in 0..c.len() {
            let mut cp = c;
            cp[j] += h;
            let mut cm = c;
            cm[j] -= h;
            let up = cell_integrals(&slopes, &cp, &Domain::Whole).unwrap();
            let dn = cell_integrals(&slopes, &cm, &Domain::Whole).unwrap();
            for i in 0..c.len() {
                if i == j {
                    continue;
                }
                let fd = (up.masses[i] - dn.masses[i]) / (2.0 * h);
                let (a, b) = (i.min(j), i.max(j));
                let f = base.fluxes.iter().find(|x| x.0 == a && x.1 == b).map_or(0.0, |x| x.2);
                assert!((fd - f).abs() < 1e-6, "i={i} j={j}: fd={fd} flux={f}");
            }
        }
    }

    #[test]
    fn polygon_domain() {
        // ∫ over [0,1]² of e^{−x−y} via a single piece with slope (1,1)
        let sq = Domain::Polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let r = cell_integrals(&[vec![1.0, 1.0]], &[0.0], &sq).unwrap();
        let e = 1.0 - (-1f64).exp();
        assert!(close(r.total, e * e, 1e-14));
        let r = cell_integrals(&[vec![1.0]], &[0.0], &Domain::Interval(0.0, 1.0)).unwrap();
        assert!(close(r.total, e, 1e-15));
    }

    #[test]
    fn duplicate_pieces_are_counted_once() {
        let slopes = vec![vec![-1.0, -1.0], vec![-1.0, -1.0], vec![2.0, -1.0], vec![-1.0, 2.0]];
        let r = cell_integrals(&slopes, &[0.0; 4], &Domain::Whole).unwrap();
        assert!(close(r.total, 3.0, 1e-14));
        assert_eq!(r.masses[1], 0.0);
    }

    #[test]
    fn divergent_tails_are_reported() {
        let slopes = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            cell_integrals(&slopes, &[0.0; 3], &Domain::Whole),
            Err(Error::TailDivergence(_))
        ));
        assert!(cell_integrals(&[vec![1.0], vec![2.0]], &[0.0, 0.0], &Domain::Whole).is_err());
    }
}
