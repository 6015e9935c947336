use std::f64::consts::PI;

use proptest::prelude::*;
use skyrmap_core::energy::golden_section;
use skyrmap_core::euler_lagrange::System;
use skyrmap_core::linalg::gauss_legendre_on;
use skyrmap_core::stability::vector_calculus;
use skyrmap_core::*;

fn zoo_map(which: usize, p: f64) -> MapFamily {
    let spec = match which {
        0 => format!("alpha_join(trig(0, 1, {}, 2), 2, 1)", 0.2 * p),
        1 => format!("gamma_hopf(affine(pi/2, -2), {})", 1 + (p * 3.0) as i32),
        2 => format!("torus_contacto(sine({}, 3), 2)", 0.3 * p),
        3 => format!("identity({})", 0.5 + p),
        4 => format!("henon({}, 0.3)", 2.0 * p - 1.0),
        _ => format!("nomizu(trig(0, 1, {}, 4), 3)", 0.1 * p),
    };
    make_map(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pointwise_newton_inequality(which in 0usize..6, p in 0.0f64..1.0, u in 0.05f64..0.95, v in 0.05f64..0.95, w in 0.05f64..0.95) {
        let m = zoo_map(which, p);
        let x: Vec<f64> = m.domain.coord_ranges.iter().zip([u, v, w]).map(|((lo, hi), t)| lo + t * (hi - lo)).collect();
        let d = analyze_point(&m, &x).unwrap();
        let bound = d.newton_bound(m.dim_codomain().min(m.dim_domain()));
        prop_assert!(d.sigma2() <= bound + 1e-12 * bound.max(1.0));
        // invariants agree with traces of the Cauchy–Green endomorphism g⁻¹φ*h
        let c = m.domain.metric(&x).try_inverse().unwrap() * &d.pullback_metric;
        let (t1, t2) = (c.trace(), (&c * &c).trace());
        prop_assert!((t1 - d.sigma1()).abs() <= 1e-10 * d.sigma1().max(1.0));
        prop_assert!((0.5 * (t1 * t1 - t2) - d.sigma2()).abs() <= 1e-10 * d.sigma1().powi(2).max(1.0));
        prop_assert!(d.eigenvalues.iter().all(|l| *l >= 0.0));
        prop_assert!(d.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn verdict_is_monotone_in_tolerance(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20), t1 in 1e-6f64..1.0, t2 in 1e-6f64..1.0) {
        let grid = vec![vec![0.0; 3]; rows.len()];
        let r = ResidualReport::new(System::General, "synthetic", grid, rows.clone(), 1e-6);
        prop_assert_eq!(ResidualReport::compute_norms(&rows), r.norms.clone());
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(!r.verdict_at(lo) || r.verdict_at(hi));
    }

    #[test]
    fn radius_optimum_closed_form(a in 0.1f64..100.0, b in 0.1f64..100.0, kappa in 0.1f64..10.0) {
        let e = |r: f64| a * r + kappa * b / r;
        let r_star = (kappa * b / a).sqrt();
        let (r, emin) = golden_section(e, r_star / 10.0, r_star * 10.0, 1e-10 * r_star);
        prop_assert!((emin - 2.0 * (kappa * a * b).sqrt()).abs() < 1e-10 * emin);
        prop_assert!((r - r_star).abs() < 1e-5 * r_star);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials(deg in 0u32..40, lo in -2.0f64..0.0, hi in 0.5f64..3.0) {
        let (x, w) = gauss_legendre_on(24, lo, hi);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
        let want = (hi.powi(deg as i32 + 1) - lo.powi(deg as i32 + 1)) / (deg as f64 + 1.0);
        prop_assert!((got - want).abs() < 1e-12 * want.abs().max(1.0) * 3f64.powi(deg as i32));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_newton_inequality(seed in 0u64..1000, band in 1usize..3, u in 0.1f64..0.9, v in 0.1f64..0.9, w in 0.0f64..1.0) {
        let c = make_chart_str("s3_suspension(1)").unwrap();
        let x = [u * PI, v * PI, w * 2.0 * PI];
        let vc = vector_calculus(&VariationField::fourier_random(&c, seed, band), &x).unwrap();
        prop_assert!(vc.newton_gap() >= -1e-10 * vc.lie_norm2().max(1.0));
        let vc = vector_calculus(&VariationField::conformal_gradient(&c, (seed % 4) as usize).unwrap(), &x).unwrap();
        prop_assert!(vc.newton_gap().abs() < 1e-8);
    }

    #[test]
    fn frame_signs_leave_norms_unchanged(s1 in prop::bool::ANY, s2 in prop::bool::ANY, s3 in prop::bool::ANY) {
        let m = make_map("alpha_join(arccos_cos2, 2, 1)").unwrap();
        let g = euler_lagrange::residual_grid(&m, 8);
        let sign = |b: bool| if b { -1.0 } else { 1.0 };
        let a = residual_3target(&m, &g).unwrap();
        let b = euler_lagrange::residual_3target_with(&m, &g, Some(&[sign(s1), sign(s2), sign(s3)])).unwrap();
        for (na, nb) in a.norms.iter().zip(&b.norms) {
            prop_assert!((na.sup - nb.sup).abs() < 1e-9 * na.sup.max(1.0));
            prop_assert!((na.l2 - nb.l2).abs() < 1e-9 * na.l2.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hessians_scale_quadratically(seed in 0u64..100, c in -3.0f64..3.0) {
        let chart = make_chart_str("s3_suspension(1)").unwrap();
        let rule = QuadratureRule::product_orders(&chart, &[12, 12, 8]);
        let x = VariationField::fourier_random(&chart, seed, 1);
        let cx = x.scaled(c);
        for form in [HessianForm::Sigma2Homothety, HessianForm::Sigma12Full, HessianForm::DirichletPart] {
            let a = hessian_homothety(&x, 3, 0.8, 1.3, &rule, form).unwrap();
            let b = hessian_homothety(&cx, 3, 0.8, 1.3, &rule, form).unwrap();
            prop_assert!((b.value - c * c * a.value).abs() < 1e-9 * a.value.abs().max(1.0));
            let total: f64 = a.terms.iter().map(|t| t.1).sum();
            prop_assert!((total - a.value).abs() < 1e-12 * a.value.abs().max(1.0));
        }
    }

    #[test]
    fn energy_scales_with_radius(r in 0.3f64..4.0, eps in 0.0f64..0.15) {
        let m = make_map(&format!("alpha_join(trig(0, 1, {eps}, 2), 2, 1)")).unwrap();
        let orders = QuadOrders::default();
        let base = integrate_energy(&m, &QuadratureRule::default_for(&m, orders), 1.0).unwrap();
        let d = m.deformed(&Deformation::RadiusScale(r)).unwrap();
        let rep = integrate_energy(&d, &QuadratureRule::default_for(&d, orders), 1.0).unwrap();
        prop_assert!((rep.e_sigma1 - r * base.e_sigma1).abs() < 1e-10 * rep.e_sigma1);
        prop_assert!((rep.e_sigma2 - base.e_sigma2 / r).abs() < 1e-10 * rep.e_sigma2);
        prop_assert!(rep.newton_holds(1e-12));
    }
}
