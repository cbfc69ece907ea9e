use fundasym::expansion::{build_table, eval_y_asym};
use fundasym::funcspace::{Base, ChebGrid, GridFunction, ANALYTIC, C64};
use fundasym::neumann::{apply_v, ColumnFunction};
use fundasym::problem::{DerivedQuantities, HalfPlane, SystemCoefficients};
use fundasym::scaled::Scaled;
use proptest::prelude::*;

fn poly(g: &std::sync::Arc<ChebGrid>, c: [f64; 3]) -> GridFunction {
    GridFunction::from_real_fn(g, ANALYTIC, move |x| c[0] + c[1] * x + c[2] * x * x)
}

fn system(a: [f64; 2], b: [f64; 4], n: usize) -> SystemCoefficients {
    let g = ChebGrid::new(48).unwrap();
    SystemCoefficients::new(
        GridFunction::from_real_fn(&g, ANALYTIC, move |x| a[0] + 0.3 * x),
        GridFunction::from_real_fn(&g, ANALYTIC, move |x| -a[1] - 0.2 * x * x),
        poly(&g, [b[0], 0.1, 0.0]),
        poly(&g, [b[1], 0.0, 0.5]),
        GridFunction::from_real_fn(&g, ANALYTIC, move |x| b[2] * (2.0 * x).sin()),
        poly(&g, [b[3], -0.2, 0.0]),
        n,
        0.5,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derivative_inverts_integration(c in prop::array::uniform3(-3.0f64..3.0), k in 0.5f64..4.0) {
        let g = ChebGrid::new(64).unwrap();
        let f = GridFunction::from_real_fn(&g, ANALYTIC, move |x| c[0] + c[1] * (k * x).sin() + c[2] * (c[0] * x).exp());
        let back = f.integrate_from(Base::Zero).derivative().unwrap();
        prop_assert!(back.max_abs_diff(&f) <= 1e-8 * (1.0 + f.max_abs()));
    }

    #[test]
    fn integration_from_one_complements_zero(c in prop::array::uniform3(-3.0f64..3.0)) {
        let g = ChebGrid::new(32).unwrap();
        let f = poly(&g, c);
        let total = f.definite_integral();
        let sum = &f.integrate_from(Base::Zero) + &f.integrate_from(Base::One);
        prop_assert!(sum.values().iter().all(|v| (v - total).norm() < 1e-12));
    }

    #[test]
    fn derived_invariants(a in prop::array::uniform2(0.3f64..3.0), b in prop::array::uniform4(-2.0f64..2.0)) {
        let s = system(a, b, 1);
        let d = DerivedQuantities::new(&s).unwrap();
        let rho = d.rho.values();
        prop_assert_eq!(rho[0].norm(), 0.0);
        prop_assert!(rho.windows(2).all(|w| w[1].re > w[0].re));
        let lhs = &d.q12 * &d.q21;
        let rhs = &s.b12 * &s.b21;
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn endpoint_normalization(a in prop::array::uniform2(0.3f64..3.0), b in prop::array::uniform4(-2.0f64..2.0)) {
        let s = system(a, b, 3);
        let t = build_table(&s, HalfPlane::plus(0.0)).unwrap();
        let last = s.a1.grid().len() - 1;
        for r in &t.r {
            prop_assert_eq!(r.r11.values()[last].norm(), 0.0);
            prop_assert_eq!(r.r22.values()[0].norm(), 0.0);
        }
    }

    #[test]
    fn zero_coupling_collapse(a in prop::array::uniform2(0.3f64..3.0), d in prop::array::uniform2(-1.0f64..1.0), x in 0.0f64..1.0, l in 1.0f64..500.0) {
        let mut s = system(a, [d[0], 0.0, 0.0, d[1]], 2);
        let g = s.a1.grid().clone();
        s.b12 = GridFunction::zero(&g);
        s.b21 = GridFunction::zero(&g);
        let dq = DerivedQuantities::new(&s).unwrap();
        let t = build_table(&s, HalfPlane::plus(0.0)).unwrap();
        prop_assert!(t.r.iter().all(|r| r.max_abs() == 0.0));
        let y = eval_y_asym(&t, &dq, x, C64::new(l, 0.0)).unwrap();
        let m = dq.matrix_m(x).unwrap();
        let e = dq.matrix_e(x, C64::new(l, 0.0)).unwrap();
        prop_assert!(y.rel_distance(&e.left_mul(&m)) < 1e-14);
    }

    #[test]
    fn v_is_linear(a in prop::array::uniform2(0.3f64..3.0), b in prop::array::uniform4(-2.0f64..2.0), alpha in -2.0f64..2.0, l in 20.0f64..200.0) {
        let s = system(a, b, 1);
        let d = DerivedQuantities::new(&s).unwrap();
        let g = d.grid().clone();
        let f = ColumnFunction::new(poly(&g, [1.0, alpha, 0.0]), poly(&g, [0.0, 1.0, alpha]));
        let h = ColumnFunction::new(poly(&g, [alpha, 0.0, 1.0]), poly(&g, [2.0, 0.0, 0.0]));
        let sum = ColumnFunction::new(&f.f1 + &(&h.f1 * alpha), &f.f2 + &(&h.f2 * alpha));
        let lam = C64::new(l, 0.0);
        for k in 1..=2 {
            let vf = apply_v(&d, k, lam, &f).unwrap();
            let vh = apply_v(&d, k, lam, &h).unwrap();
            let vs = apply_v(&d, k, lam, &sum).unwrap();
            for j in 0..g.len() {
                let (p, q, r) = (vf.at_node(&d, j), vh.at_node(&d, j), vs.at_node(&d, j));
                for i in 0..2 {
                    prop_assert!((p[i] + q[i] * alpha - r[i]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scaled_product_adds_logs(m1 in 0.1f64..10.0, m2 in 0.1f64..10.0, e1 in -800.0f64..800.0, e2 in -800.0f64..800.0) {
        let a = Scaled::new(C64::new(m1, 0.0), C64::new(e1, 0.0));
        let b = Scaled::new(C64::new(m2, 0.0), C64::new(e2, 0.0));
        let p = a * b;
        prop_assert!((p.ln_abs() - (a.ln_abs() + b.ln_abs())).abs() < 1e-10);
    }
}
