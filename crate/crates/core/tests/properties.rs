use fraclab_core::energy::{eval_gagliardo, DiscreteFunctional, EnergyParams};
use fraclab_core::grid::{kth_difference, resample_scaled, DiffOperator, GridProfile, UniformGrid};
use fraclab_core::kernel::KernelSpec;
use fraclab_core::optimizer::{check_gradient, ClampSpec, Objective};
use fraclab_core::potential::DoubleWell;
use fraclab_core::quadrature::{QuadratureScheme, QuadratureWeights};
use proptest::prelude::*;

fn order() -> impl Strategy<Value = (usize, f64)> {
    prop_oneof![
        (0.55f64..0.95).prop_map(|s| (0, s)),
        (0.1f64..0.95).prop_map(|s| (1, s)),
        (0.1f64..0.95).prop_map(|s| (2, s)),
    ]
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|c| KernelSpec::Constant { c }),
        (-1.0f64..1.0).prop_map(|c1| KernelSpec::CosSum { c0: 2.5, c1 }),
        (-1.0f64..1.0).prop_map(|c1| KernelSpec::CosProd { c0: 1.5, c1 }),
    ]
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n)
}

fn grid(n_cells: usize) -> UniformGrid {
    UniformGrid::new(0.0, 1.0, n_cells).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn differences_are_linear(k in 0usize..3, u in values(17), v in values(17), a in -3.0f64..3.0) {
        let op = DiffOperator::new(&grid(16), k).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
        let lhs = op.apply(&mix);
        let (du, dv) = (op.apply(&u), op.apply(&v));
        for i in 0..lhs.len() {
            let rhs = a * du[i] + dv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn differences_annihilate_low_degree_polynomials(k in 1usize..3, c0 in -2.0f64..2.0, c1 in -2.0f64..2.0) {
        let g = grid(32);
        let p = GridProfile::from_fn(g, |x| if k == 1 { c0 } else { c0 + c1 * x }).unwrap();
        let d = kth_difference(&p, k).unwrap();
        prop_assert!(d.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rescaling_round_trips(lambda in 0.1f64..10.0, u in values(33)) {
        let p = GridProfile::new(UniformGrid::symmetric(2.0, 32).unwrap(), u).unwrap();
        let back = resample_scaled(&resample_scaled(&p, lambda).unwrap(), 1.0 / lambda).unwrap();
        prop_assert_eq!(back.values(), p.values());
        prop_assert!((back.grid().x_hi() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oscillating_energy_is_sandwiched((k, s) in order(), a in kernel(), delta in 0.05f64..1.0, u in values(41)) {
        let p = GridProfile::new(grid(40), u).unwrap();
        let w = QuadratureWeights::new(p.grid(), s, QuadratureScheme::Corrected).unwrap();
        let e1 = eval_gagliardo(&p, k, s, None, &w, None).unwrap();
        let ea = eval_gagliardo(&p, k, s, Some(&a), &w, Some(delta)).unwrap();
        let tol = 1e-10 * (1.0 + e1);
        prop_assert!(e1 >= 0.0);
        prop_assert!(a.alpha_a() * e1 - tol <= ea && ea <= a.beta_a() * e1 + tol);
    }

    #[test]
    fn reduced_energy_matches_full((k, s) in order(), a in kernel(), u in values(49), mask in prop::collection::vec(any::<bool>(), 49)) {
        let g = grid(48);
        let params = EnergyParams::new(k, s, 0.1, 0.07).unwrap();
        let f = DiscreteFunctional::scaled(&g, &params, DoubleWell::new(0.3).unwrap(), a, QuadratureScheme::Corrected).unwrap();
        let clamp = ClampSpec::new(mask, u.clone()).unwrap();
        let r = f.reduced(&clamp).unwrap();
        let x = r.gather(&u);
        let full = f.value(&u);
        prop_assert!((r.value(&x) - full).abs() <= 1e-9 * (1.0 + full));
        prop_assert_eq!(r.scatter(&x), u);
    }

    #[test]
    fn energy_is_nonnegative((k, s) in order(), a in kernel(), chi in -0.9f64..0.9, u in values(33)) {
        let params = EnergyParams::new(k, s, 0.2, 0.1).unwrap();
        let f = DiscreteFunctional::scaled(&grid(32), &params, DoubleWell::new(chi).unwrap(), a, QuadratureScheme::Corrected).unwrap();
        let parts = f.parts(&u);
        prop_assert!(parts.well >= 0.0 && parts.nonlocal >= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences((k, s) in order(), a in kernel(), u in values(33)) {
        let params = EnergyParams::new(k, s, 0.1, 0.05).unwrap();
        let f = DiscreteFunctional::scaled(&grid(32), &params, DoubleWell::new(0.4).unwrap(), a, QuadratureScheme::Corrected).unwrap();
        let p = GridProfile::new(*f.grid(), u).unwrap();
        let err = check_gradient(|u| f.value(u), |u| f.gradient(u), &p);
        prop_assert!(err <= 1e-6, "relative error {}", err);
    }

    #[test]
    fn constant_kernels_scale_out(c in 0.2f64..20.0, (k, s) in order(), u in values(65)) {
        let lambda = c.powf(1.0 / (2.0 * (k as f64 + s)));
        let p = GridProfile::new(UniformGrid::symmetric(3.0, 64).unwrap(), u).unwrap();
        let well = DoubleWell::default();
        let phi = |p: &GridProfile, a: KernelSpec| {
            DiscreteFunctional::rescaled(p.grid(), k, s, a, 1.0, well, QuadratureScheme::Corrected)
                .unwrap()
                .value(p.values())
        };
        let lhs = phi(&p, KernelSpec::Constant { c });
        let rhs = lambda * phi(&resample_scaled(&p, lambda).unwrap(), KernelSpec::unit());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
    }
}
