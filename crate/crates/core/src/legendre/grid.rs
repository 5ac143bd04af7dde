//! Dual grids: the uniform (Freudenthal) subdivision of a triangulation of `P`, with lumped
//! P1 weights.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::polytope::RationalPolytope;
use crate::rational::{int, to_f64, Rational, RationalVector};

/// Nodes, weights and small simplices of a subdivided polytope.
///
/// Each simplex of the pulling triangulation is cut into `kⁿ` simplices of equal volume;
/// a node's weight is `vol/(n+1)` summed over the small simplices containing it. Weights
/// are exact rationals, sum to `Vol(P)`, and integrate affine functions exactly. Grids for
/// `k` and `2k` are nested.
#[derive(Clone, Debug)]
pub struct DualGrid {
    pub dim: usize,
    pub subdivision: usize,
    pub nodes: Vec<RationalVector>,
    pub nodes_f64: Vec<Vec<f64>>,
    pub weights: Vec<Rational>,
    pub weights_f64: Vec<f64>,
    /// Small simplices as node indices.
    pub simplices: Vec<Vec<usize>>,
    /// Volume of each small simplex.
    pub simplex_volumes: Vec<f64>,
    pub volume: Rational,
    /// Indices of the vertices of `P` among the nodes.
    pub vertex_nodes: Vec<usize>,
}

const MAX_SMALL_SIMPLICES: usize = 2_000_000;

/// Index paths `0 = y₀ ≤ … ` of the Kuhn simplices inside `{k ≥ y₁ ≥ … ≥ yₙ ≥ 0}`.
fn kuhn_simplices(n: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    let mut perms: Vec<Vec<usize>> = Vec::new();
    permutations(&mut (0..n).collect(), 0, &mut perms);
    let mut out = Vec::new();
    let mut z = vec![0usize; n];
    loop {
        for perm in &perms {
            let mut pts = Vec::with_capacity(n + 1);
            let mut cur = z.clone();
            pts.push(cur.clone());
            for &axis in perm {
                cur[axis] += 1;
                pts.push(cur.clone());
            }
            if pts.iter().all(|y| inside(y, k)) {
                out.push(pts);
            }
        }
        // odometer over [0, k−1]ⁿ
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
            i += 1;
        }
    }
}

fn inside(y: &[usize], k: usize) -> bool {
    y[0] <= k && y.windows(2).all(|w| w[0] >= w[1])
}

fn permutations(v: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == v.len() {
        out.push(v.clone());
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permutations(v, start + 1, out);
        v.swap(start, i);
    }
}

impl DualGrid {
    pub fn new(p: &RationalPolytope, k: usize) -> Result<Arc<Self>> {
        if k == 0 {
            return Err(Error::BadParams("grid subdivision must be at least 1".into()));
        }
        let n = p.dim();
        let tri = p.triangulate();
        let per_simplex = k.checked_pow(n as u32).unwrap_or(usize::MAX);
        if per_simplex.saturating_mul(tri.simplices.len()) > MAX_SMALL_SIMPLICES {
            return Err(Error::TooLarge(format!(
                "{} small simplices exceed the limit {MAX_SMALL_SIMPLICES}",
                per_simplex.saturating_mul(tri.simplices.len())
            )));
        }
        let kuhn = kuhn_simplices(n, k);
        debug_assert_eq!(kuhn.len(), per_simplex);
        let kq = int(k as i64);
        let np1 = BigRational::from_integer(BigInt::from(n + 1));
        let mut index: BTreeMap<RationalVector, usize> = BTreeMap::new();
        let mut nodes = Vec::new();
        let mut weights: Vec<Rational> = Vec::new();
        let mut simplices = Vec::new();
        let mut simplex_volumes = Vec::new();
        for s in &tri.simplices {
            let verts: Vec<&RationalVector> = s.iter().map(|&i| &p.vertices()[i]).collect();
            let small_vol = tri.simplex_volume(p, s) / BigRational::from_integer(BigInt::from(per_simplex));
            let share = &small_vol / &np1;
            let small_vol_f = to_f64(&small_vol);
            for pts in &kuhn {
                let mut ids = Vec::with_capacity(n + 1);
                for y in pts {
                    // barycentric: λ₀ = 1 − y₁/k, λⱼ = (yⱼ − yⱼ₊₁)/k
                    let mut x = verts[0].scale(&((&kq - int(y[0] as i64)) / &kq));
                    for j in 1..=n {
                        let next = if j < n { y[j] } else { 0 };
                        let lam = int(y[j - 1] as i64 - next as i64) / &kq;
                        if !lam.is_zero() {
                            x = &x + &verts[j].scale(&lam);
                        }
                    }
                    let id = *index.entry(x.clone()).or_insert_with(|| {
                        nodes.push(x);
                        weights.push(Rational::zero());
                        nodes.len() - 1
                    });
                    weights[id] += &share;
                    ids.push(id);
                }
                simplices.push(ids);
                simplex_volumes.push(small_vol_f);
            }
        }
        let vertex_nodes = p.vertices().iter().map(|v| index[v]).collect();
        Ok(Arc::new(DualGrid {
            dim: n,
            subdivision: k,
            nodes_f64: nodes.iter().map(RationalVector::to_f64).collect(),
            weights_f64: weights.iter().map(to_f64).collect(),
            nodes,
            weights,
            simplices,
            simplex_volumes,
            volume: p.volume(),
            vertex_nodes,
        }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Values of a dual function `u` on the nodes of a grid.
#[derive(Clone, Debug)]
pub struct DualGridFunction {
    pub grid: Arc<DualGrid>,
    pub values: Vec<f64>,
}

impl DualGridFunction {
    pub fn new(grid: Arc<DualGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<DualGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.nodes_f64.iter().map(|p| f(p)).collect();
        Self { grid, values }
    }
}
