use arakelov_toric::ding::{maximize, DingConfig};
use arakelov_toric::io::fixtures;
use arakelov_toric::mabuchi::{
    consistency_rhs, donaldson_invariant_gap, donaldson_mabuchi, mabuchi_consistency, smoothing_sweep, ConsistencyOptions, DualPotential,
    FnPotential, GuilleminPotential, Quadrature,
};
use arakelov_toric::rational::int;
use arakelov_toric::{builtin, Builtin};

const HEXAGON: [[f64; 2]; 6] = [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [-1.0, 0.0], [-1.0, -1.0], [0.0, -1.0]];

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫_P |p|²` by the triangle second-moment formula over a fan from the origin, and
/// `∫_{∂P} |p|² dσ` edge by edge; every hexagon edge has a primitive normal of length
/// `‖l‖` equal to its Euclidean length.
fn hexagon_second_moments() -> (f64, f64) {
    let mut interior = 0.0;
    let mut boundary = 0.0;
    for k in 0..6 {
        let a = HEXAGON[k];
        let b = HEXAGON[(k + 1) % 6];
        let area = 0.5 * (a[0] * b[1] - a[1] * b[0]).abs();
        interior += area / 6.0 * (dot(a, a) + dot(b, b) + dot(a, b));
        boundary += (dot(a, a) + dot(a, b) + dot(b, b)) / 3.0;
    }
    (interior, boundary)
}

#[test]
fn quadratic_potential_on_hexagon() {
    let p = builtin(&Builtin::Hexagon).unwrap();
    let u = FnPotential::new(2, |y: &[f64]| 0.5 * (y[0] * y[0] + y[1] * y[1])).with_hessian(|_| vec![1.0, 0.0, 0.0, 1.0]);
    let m = donaldson_mabuchi(&u, &p, &Quadrature::Grid { subdivision: 4 }).unwrap();
    let (interior, boundary) = hexagon_second_moments();
    assert!(m.log_det_integral.abs() < 1e-14);
    assert!((m.a - 2.0).abs() < 1e-14);
    assert!((m.integral - 0.5 * interior).abs() < 1e-12, "{} vs {}", m.integral, 0.5 * interior);
    assert!((m.value - (0.5 * boundary - 2.0 * 0.5 * interior)).abs() < 1e-12);
}

#[test]
fn affine_gauge_on_hexagon() {
    let p = builtin(&Builtin::Hexagon).unwrap();
    let q = Quadrature::Adaptive {
        tol: 1e-9,
        max_simplices: 20_000,
    };
    let g = GuilleminPotential::new(&p);
    let base = donaldson_mabuchi(&g, &p, &q).unwrap();
    let shifted = FnPotential::new(2, |y: &[f64]| g.value(y) + 0.7 * y[0] - 1.3 * y[1] + 2.5).with_hessian({
        let g = g.clone();
        move |y| g.hessian(y)
    });
    let moved = donaldson_mabuchi(&shifted, &p, &q).unwrap();
    assert!((base.value - moved.value).abs() < 1e-7, "{} vs {}", base.value, moved.value);
}

#[test]
fn a_equals_dimension_on_reflexive_fixtures() {
    for f in fixtures().iter().filter(|f| f.expected.reflexive) {
        let p = f.polytope();
        assert_eq!(p.boundary_measure() / p.volume(), int(p.dim() as i64), "{}", f.name);
    }
}

#[test]
fn grid_quadrature_converges_at_first_order() {
    let p = builtin(&Builtin::Pn(2)).unwrap();
    let g = GuilleminPotential::new(&p);
    let reference = donaldson_mabuchi(
        &g,
        &p,
        &Quadrature::Adaptive {
            tol: 1e-10,
            max_simplices: 200_000,
        },
    )
    .unwrap()
    .value;
    let err = |k| (donaldson_mabuchi(&g, &p, &Quadrature::Grid { subdivision: k }).unwrap().value - reference).abs();
    let (e1, e2) = (err(8), err(16));
    let order = (e1 / e2).log2();
    assert!(order >= 0.9, "errors {e1:e}, {e2:e}, order {order}");
}

#[test]
fn guillemin_attains_the_predicted_minimum() {
    let q = Quadrature::Adaptive {
        tol: 1e-9,
        max_simplices: 200_000,
    };
    let pn_chi = arakelov_toric::analysis::pn_chi_volume;
    for (b, chi, vol) in [(Builtin::Pn(2), pn_chi(2), 4.5), (Builtin::Cube(2), 4.0 * pn_chi(1), 4.0)] {
        let p = builtin(&b).unwrap();
        let m = donaldson_mabuchi(&GuilleminPotential::new(&p), &p, &q).unwrap();
        let rhs = consistency_rhs(chi, vol, 2);
        let dev = (m.value - rhs).abs();
        assert!(dev <= m.error_estimate && dev < 1e-4, "{b}: {} vs {rhs}", m.value);
    }
}

#[test]
fn consistency_on_segment_and_sweep_stays_above_minimum() {
    let p = builtin(&Builtin::Pn(1)).unwrap();
    let ding = maximize(&p, &DingConfig { subdivision: 50, ..Default::default() }).unwrap();
    let opts = ConsistencyOptions {
        rel_tol: 1e-3,
        sweep: Some(Quadrature::Adaptive {
            tol: 1e-8,
            max_simplices: 10_000,
        }),
        ..Default::default()
    };
    let r = mabuchi_consistency(&p, &ding, &opts).unwrap();
    assert!((r.rhs - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-4);
    assert!(r.checks.iter().all(|c| c.holds), "{:#?}", r.checks);
    assert_eq!(r.checks.len(), 4);
    let s = r.sweep.unwrap();
    assert!(s.values.windows(2).all(|w| w[0] < w[1]), "{:?}", s.values);
}

#[test]
fn sweep_on_projective_plane_never_undershoots() {
    let p = builtin(&Builtin::Pn(2)).unwrap();
    let ding = maximize(&p, &DingConfig { subdivision: 3, ..Default::default() }).unwrap();
    let s = smoothing_sweep(
        &p,
        &ding,
        &Quadrature::Adaptive {
            tol: 1e-4,
            max_simplices: 2000,
        },
    )
    .unwrap();
    let exact = consistency_rhs(arakelov_toric::analysis::pn_chi_volume(2), 4.5, 2);
    for (v, e) in s.values.iter().zip(&s.error_estimates) {
        assert!(*v >= exact - e, "{v} below {exact}");
    }
}

#[test]
fn invariant_gap_is_positive_off_projective_space() {
    let cfg = DingConfig { subdivision: 7, ..Default::default() };
    for b in [Builtin::Cube(2), Builtin::Hexagon] {
        let p = builtin(&b).unwrap();
        let gap = donaldson_invariant_gap(&p, &maximize(&p, &cfg).unwrap()).unwrap();
        assert!(gap.gap > 0.1, "{b}: {gap:?}");
        assert!(gap.gap_unshifted > 0.0);
    }
    let p2 = builtin(&Builtin::Pn(2)).unwrap();
    let d = maximize(&p2, &cfg).unwrap();
    let gap = donaldson_invariant_gap(&p2, &d).unwrap();
    assert!(gap.gap.abs() <= 2.0 * d.height_error / 6.0 + 1e-12, "{gap:?}");
    assert!(donaldson_invariant_gap(&builtin(&Builtin::Bl1P2).unwrap(), &d).is_err());
}
