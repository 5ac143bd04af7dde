use bitvec::vec::BitVec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::RationalPolytope;
use crate::rational::{determinant, factorial, Rational, RationalVector};

/// Which vertex each recursive cone is pulled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApexRule {
    /// The lowest-index vertex of every face.
    LowestIndex,
}

/// A triangulation of a polytope into full-dimensional simplices on its vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triangulation {
    pub simplices: Vec<Vec<usize>>,
    pub apex: ApexRule,
}

impl Triangulation {
    pub fn simplex_volume(&self, p: &RationalPolytope, s: &[usize]) -> Rational {
        simplex_volume(&s.iter().map(|&i| &p.vertices()[i]).collect::<Vec<_>>())
    }

    pub fn volume(&self, p: &RationalPolytope) -> Rational {
        self.simplices
            .iter()
            .map(|s| self.simplex_volume(p, s))
            .fold(Rational::zero(), |a, b| a + b)
    }

    pub fn barycenter(&self, p: &RationalPolytope) -> RationalVector {
        let n = p.dim();
        let mut total = Rational::zero();
        let mut acc = RationalVector::zeros(n);
        let k = BigRational::from_integer(BigInt::from(n + 1));
        for s in &self.simplices {
            let vol = self.simplex_volume(p, s);
            let mut centroid = RationalVector::zeros(n);
            for &i in s {
                centroid = &centroid + &p.vertices()[i];
            }
            acc = &acc + &centroid.scale(&(&vol / &k));
            total += vol;
        }
        acc.scale(&total.recip())
    }
}

/// `|det(v₁ − v₀, …, vₙ − v₀)| / n!`
pub(crate) fn simplex_volume(vs: &[&RationalVector]) -> Rational {
    let n = vs.len() - 1;
    let rows: Vec<Vec<Rational>> = vs[1..].iter().map(|v| (*v - vs[0]).into_coords()).collect();
    determinant(&rows).abs() / BigRational::from_integer(factorial(n as u32))
}

pub(crate) fn pulling(p: &RationalPolytope) -> Triangulation {
    let all: BitVec = std::iter::repeat_n(true, p.vertices().len()).collect();
    let mut simplices = Vec::new();
    triangulate_face(p, &all, p.dim(), &mut simplices);
    Triangulation {
        simplices,
        apex: ApexRule::LowestIndex,
    }
}

/// Facets of the face with vertex set `face`: the inclusion-maximal proper nonempty
/// intersections with facets of the ambient polytope.
fn subfaces(p: &RationalPolytope, face: &BitVec) -> Vec<BitVec> {
    let mut cands: Vec<BitVec> = p
        .incidence()
        .iter()
        .map(|inc| {
            let mut t = face.clone();
            t &= inc;
            t
        })
        .filter(|t| t.any() && t != face)
        .collect();
    cands.sort();
    cands.dedup();
    let is_subset = |a: &BitVec, b: &BitVec| a.iter_ones().all(|i| b[i]);
    cands
        .iter()
        .filter(|t| !cands.iter().any(|u| u != *t && is_subset(t, u)))
        .cloned()
        .collect()
}

fn triangulate_face(p: &RationalPolytope, face: &BitVec, dim: usize, out: &mut Vec<Vec<usize>>) {
    let apex = face.first_one().expect("faces are nonempty");
    if dim == 0 {
        out.push(vec![apex]);
        return;
    }
    for sub in subfaces(p, face) {
        if sub[apex] {
            continue;
        }
        let mut inner = Vec::new();
        triangulate_face(p, &sub, dim - 1, &mut inner);
        for mut s in inner {
            s.insert(0, apex);
            out.push(s);
        }
    }
}

/// (n−1)-simplices of a facet with their dσ-measure.
pub(crate) fn facet_simplices(
    p: &RationalPolytope,
    facet: usize,
) -> Vec<(Rational, Vec<RationalVector>)> {
    let n = p.dim();
    let hs = &p.facets()[facet];
    let inc = &p.incidence()[facet];
    let off = (0..p.vertices().len())
        .find(|&v| !inc[v])
        .expect("full-dimensional polytope has a vertex off every facet");
    let w = &p.vertices()[off];
    let height = hs.slack(w);
    let mut simplices = Vec::new();
    triangulate_face(p, inc, n - 1, &mut simplices);
    let scale = BigRational::from_integer(factorial(n as u32 - 1)) * &height;
    simplices
        .into_iter()
        .map(|s| {
            let verts: Vec<RationalVector> = s.iter().map(|&i| p.vertices()[i].clone()).collect();
            let base = &verts[0];
            let mut rows: Vec<Vec<Rational>> =
                verts[1..].iter().map(|v| (v - base).into_coords()).collect();
            rows.push((w - base).into_coords());
            let measure = determinant(&rows).abs() / &scale;
            (measure, verts)
        })
        .collect()
}

/// (measure, centroid) pairs of a facet's simplices.
pub(crate) fn facet_pieces(p: &RationalPolytope, facet: usize) -> Vec<(Rational, RationalVector)> {
    let k = BigRational::from_integer(BigInt::from(p.dim()));
    facet_simplices(p, facet)
        .into_iter()
        .map(|(m, verts)| {
            let mut c = RationalVector::zeros(p.dim());
            for v in &verts {
                c = &c + v;
            }
            (m, c.scale(&k.recip()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{builtin, Builtin};
    use crate::rational::{int, rat};
    use num_traits::One;

    #[test]
    fn simplices_have_positive_volume_and_sum_to_total() {
        for b in [
            Builtin::Pn(2),
            Builtin::Pn(3),
            Builtin::Hexagon,
            Builtin::Cube(3),
            Builtin::Bl1P3,
            Builtin::PnxP1(3),
        ] {
            let p = builtin(&b).unwrap();
            let t = p.triangulate();
            let mut sum = Rational::zero();
            for s in &t.simplices {
                assert_eq!(s.len(), p.dim() + 1);
                let v = t.simplex_volume(&p, s);
                assert!(v.is_positive(), "{b:?}");
                sum += v;
            }
            assert_eq!(sum, p.volume());
        }
    }

    #[test]
    fn known_volumes() {
        assert_eq!(builtin(&Builtin::Pn(2)).unwrap().volume(), rat(9, 2));
        assert_eq!(builtin(&Builtin::Cube(2)).unwrap().volume(), int(4));
        assert_eq!(builtin(&Builtin::Pn(3)).unwrap().volume(), rat(32, 3));
        assert_eq!(builtin(&Builtin::Bl1P3).unwrap().volume(), rat(28, 3));
    }

    #[test]
    fn facet_measures_are_lattice_normalized() {
        // the hypotenuse of conv{(-1,-1),(2,-1),(-1,2)} has Euclidean length 3√2 and
        // normal (−1,−1) of norm √2
        let p = builtin(&Builtin::Pn(2)).unwrap();
        for f in 0..p.facets().len() {
            assert_eq!(p.facet_measure(f), int(3));
        }
        let total: Rational = (0..p.facets().len()).map(|f| p.facet_measure(f)).sum();
        assert_eq!(total, int(9));
        assert!(p.boundary_moment().is_zero());
        let seg = builtin(&Builtin::Pn(1)).unwrap();
        assert!(seg.facet_measure(0).is_one());
    }
}
