use std::sync::OnceLock;

use arakelov_toric::analysis::mahler_check;
use arakelov_toric::ding::DingProblem;
use arakelov_toric::io::{fixtures, parse_matrix, parse_native, write_matrix, write_native, PolytopeFile};
use arakelov_toric::legendre::{conjugate, integrate_exp_neg, santalo_check, MaxAffinePotential};
use arakelov_toric::mabuchi::{DualPotential, GuilleminPotential};
use arakelov_toric::rational::{factorial_f64, rat, to_f64, RationalVector};
use arakelov_toric::{builtin, Builtin, RationalPolytope};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(b: &Builtin, k: usize) -> &'static DingProblem {
    static P1: OnceLock<DingProblem> = OnceLock::new();
    static P2: OnceLock<DingProblem> = OnceLock::new();
    static HEX: OnceLock<DingProblem> = OnceLock::new();
    let cell = match b {
        Builtin::Pn(1) => &P1,
        Builtin::Pn(2) => &P2,
        Builtin::Hexagon => &HEX,
        _ => unreachable!(),
    };
    cell.get_or_init(|| DingProblem::new(&builtin(b).unwrap(), k).unwrap())
}

/// Strictly convex data `u_G + a|p|² + ⟨b,p⟩ + β` at the nodes.
fn convex_data(pr: &DingProblem, b: &Builtin, a: f64, lin: [f64; 2], beta: f64) -> Vec<f64> {
    let g = GuilleminPotential::new(&builtin(b).unwrap());
    pr.grid()
        .nodes_f64
        .iter()
        .map(|p| g.value(p) + a * p.iter().map(|x| x * x).sum::<f64>() + p.iter().zip(lin).map(|(x, l)| x * l).sum::<f64>() + beta)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_is_idempotent(values in prop::collection::vec(-2.0f64..2.0, 200)) {
        let pr = problem(&Builtin::Pn(2), 4);
        let values = &values[..pr.len()];
        let once = pr.envelope(values).unwrap();
        let twice = pr.envelope(&once).unwrap();
        for ((v, e1), e2) in values.iter().zip(&once).zip(&twice) {
            prop_assert!(*e1 <= v + 1e-12);
            prop_assert!((e1 - e2).abs() < 1e-10);
        }
    }

    #[test]
    fn triple_conjugate_is_single_conjugate(values in prop::collection::vec(-2.0f64..2.0, 200), xs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..40)) {
        let pr = problem(&Builtin::Pn(2), 4);
        let nodes = &pr.grid().nodes_f64;
        let values = &values[..pr.len()];
        let xs: Vec<Vec<f64>> = xs.into_iter().map(|(a, b)| vec![a, b]).collect();
        let g = conjugate(nodes, values, &xs);
        let h = conjugate(&xs, &g, nodes);
        let g3 = conjugate(nodes, &h, &xs);
        for (a, b) in g.iter().zip(&g3) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        for (hi, vi) in h.iter().zip(values) {
            prop_assert!(*hi <= vi + 1e-12);
        }
    }

    #[test]
    fn convex_data_is_its_own_envelope(a in 0.05f64..1.0, l0 in -1.0f64..1.0, l1 in -1.0f64..1.0, beta in -1.0f64..1.0) {
        let pr = problem(&Builtin::Pn(2), 4);
        let c = convex_data(pr, &Builtin::Pn(2), a, [l0, l1], beta);
        let env = pr.envelope(&c).unwrap();
        for (x, y) in c.iter().zip(&env) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ding_gauge_invariance(values in prop::collection::vec(-1.0f64..1.0, 200), t in -5.0f64..5.0) {
        let pr = problem(&Builtin::Hexagon, 2);
        let values = &values[..pr.len()];
        let shifted: Vec<f64> = values.iter().map(|v| v + t).collect();
        let (f0, f1) = (pr.objective(values).unwrap(), pr.objective(&shifted).unwrap());
        prop_assert!((f0 - f1).abs() <= 1e-12, "{} vs {}", f0, f1);
    }

    #[test]
    fn native_and_matrix_round_trip(n in 1usize..=3, pts in prop::collection::vec(prop::collection::vec(-3i64..=3, 3), 2..10), den in 1i64..5) {
        let verts: Vec<RationalVector> = pts.iter().map(|p| RationalVector::new(p[..n].iter().map(|&x| rat(x, den)).collect())).collect();
        let Ok(poly) = RationalPolytope::from_vertices(verts) else { return Ok(()) };
        let file = PolytopeFile::new(poly.clone()).named("sample");
        let text = write_native(&file);
        let back = parse_native(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(write_native(&back), text);
        if den == 1 {
            let m = write_matrix(&poly).unwrap();
            prop_assert_eq!(parse_matrix(&m, false).unwrap(), vec![poly]);
        }
    }
}

#[test]
fn subgradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = [(Builtin::Pn(1), 20), (Builtin::Pn(2), 4)];
    for k in 0..100 {
        let (b, sub) = &cases[k % 2];
        let pr = problem(b, *sub);
        let c = convex_data(pr, b, rng.random_range(0.05..1.0), [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], rng.random_range(-1.0..1.0));
        let g = pr.subgradient(&c).unwrap();
        let d: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 1e-5;
        let at = |s: f64| pr.objective(&c.iter().zip(&d).map(|(x, y)| x + s * y).collect::<Vec<_>>()).unwrap();
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-5, "case {k} ({b}): {fd} vs {an}");
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}

/// Random rational slope sets whose hull contains the origin in its interior.
fn random_potential(rng: &mut ChaCha8Rng) -> MaxAffinePotential {
    loop {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(n + 1..=8);
        let slopes: Vec<RationalVector> = (0..m)
            .map(|_| RationalVector::new((0..n).map(|_| rat(rng.random_range(-8..=8), rng.random_range(1..=4))).collect()))
            .collect();
        match RationalPolytope::from_vertices(slopes.clone()) {
            Ok(hull) if hull.origin_is_interior() => {
                let intercepts = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                return MaxAffinePotential::new(slopes, intercepts).unwrap();
            }
            _ => continue,
        }
    }
}

#[test]
fn santalo_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let phi = random_potential(&mut rng);
        let s = santalo_check(&phi, 1e-9).unwrap();
        assert!(s.holds, "instance {k}: {s:?}");
        worst = worst.max(s.product / s.bound);
    }
    assert!(worst < 1.0);
}

#[test]
fn santalo_equality_for_gaussians() {
    for (n, step, radius) in [(1usize, 0.02f64, 9.0f64), (2, 0.25, 6.0)] {
        let k = (radius / step) as i64;
        let axis: Vec<i64> = (-k..=k).collect();
        let mut slopes = Vec::new();
        let den = (1.0 / step).round() as i64;
        if n == 1 {
            slopes.extend(axis.iter().map(|&a| RationalVector::new(vec![rat(a, den)])));
        } else {
            for &a in &axis {
                for &b in &axis {
                    slopes.push(RationalVector::new(vec![rat(a, den), rat(b, den)]));
                }
            }
        }
        let intercepts: Vec<f64> = slopes.iter().map(|s| 0.5 * s.to_f64().iter().map(|x| x * x).sum::<f64>()).collect();
        let phi = MaxAffinePotential::new(slopes, intercepts).unwrap();
        let s = santalo_check(&phi, 1e-9).unwrap();
        assert!(s.holds);
        assert!(s.product / s.bound > 0.98, "n = {n}: {s:?}");
    }
}

#[test]
fn support_integral_is_dual_volume_for_fixtures() {
    for f in fixtures() {
        let p = f.polytope();
        let n = p.dim();
        let expected = factorial_f64(n as u32) * to_f64(&p.polar_dual().unwrap().volume());
        let got = integrate_exp_neg(&MaxAffinePotential::support(&p), 1e-8).unwrap();
        let tol = 1e-6 * expected + got.error_bound;
        assert!((got.value - expected).abs() <= tol, "{}: {} vs {expected}", f.name, got.value);
    }
}

#[test]
fn mahler_products_exceed_kurlberg_exactly() {
    for f in fixtures() {
        let m = mahler_check(&f.polytope()).unwrap();
        assert!(m.certified_above_kurlberg, "{}: {m:?}", f.name);
    }
}
