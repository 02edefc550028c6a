use std::sync::OnceLock;

use proptest::prelude::*;

use fiberfold::analysis::{classified_critical_points, uniform_grid, verify_spectral_link, FiberModel, HeightModel};
use fiberfold::config::{Instance, Resolved, RunConfig};
use fiberfold::contraction::solve_projected;
use fiberfold::fiber::fiber_point;
use fiberfold::oracle::{make_matrix_model, random_matrix_spec};
use fiberfold::problem::ProblemSpec;
use fiberfold::{BoxDomain, Field, SpectralBasis};

fn preset(name: &str) -> (Resolved, Instance) {
    let cfg = RunConfig::preset(name).unwrap().resolve().unwrap();
    let inst = cfg.problem.build(&cfg.solve_options()).unwrap();
    (cfg, inst)
}

fn ap2d() -> &'static (Resolved, Instance) {
    static P: OnceLock<(Resolved, Instance)> = OnceLock::new();
    P.get_or_init(|| preset("ap2d"))
}

fn convex() -> &'static (Resolved, Instance) {
    static P: OnceLock<(Resolved, Instance)> = OnceLock::new();
    P.get_or_init(|| preset("ap-convex-1d"))
}

fn pg(ps: &ProblemSpec) -> Field {
    ps.project_h(ps.rhs().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn contraction_rate_is_below_n_over_c(t in -40.0f64..40.0) {
        let (cfg, inst) = ap2d();
        let ps = inst.problem().unwrap();
        let rep = solve_projected(ps, &pg(ps), t, &cfg.solve_options()).unwrap();
        prop_assert!(rep.observed_rate <= ps.gap().ratio() + 0.05, "rate {}", rep.observed_rate);
        prop_assert!(rep.final_residual <= 1e-10);
    }

    #[test]
    fn fiber_points_stay_on_the_fiber(t in -40.0f64..40.0, c in -5.0f64..5.0) {
        let (cfg, inst) = ap2d();
        let ps = inst.problem().unwrap();
        let mut z0 = pg(ps);
        z0[1] += c;
        let p = fiber_point(ps, &z0, t, &cfg.solve_options()).unwrap();
        let back = ps.project_h(&ps.apply_f(&p.u).unwrap());
        prop_assert!((back.into_inner() - z0.coeffs()).norm() <= 1e-9 * (1.0 + z0.norm_y()));
        prop_assert!((p.u[ps.p()] - t).abs() < 1e-12);
    }

    #[test]
    fn parseval_holds_on_the_grid(coeffs in proptest::collection::vec(-1.0f64..1.0, 64)) {
        let basis = SpectralBasis::new(BoxDomain::rectangle(1.0, 2.0).unwrap(), &[8, 8], 4).unwrap();
        let f = Field::from(coeffs);
        let g = basis.to_grid(&f).unwrap();
        let l2 = basis.grid_l2_squared(&g);
        prop_assert!((l2 - f.norm_y().powi(2)).abs() <= 1e-10 * (1.0 + l2));
        let back = basis.from_grid(&g).unwrap();
        prop_assert!((back.into_inner() - f.coeffs()).norm() <= 1e-12 * (1.0 + f.norm_y()));
    }

    #[test]
    fn sine_models_respect_their_slope_bounds(seed in 0u64..1000, scale in 0.1f64..10.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(4..=8);
        let spec = random_matrix_spec(&mut rng, dim);
        let ps = make_matrix_model(&spec).unwrap();
        let n = spec.amplitudes.iter().fold(0.0f64, |a, b| a.max(*b));
        let u = Field::from((0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let v = Field::from((0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let du = ps.operator().apply(&u).unwrap().into_inner() - ps.operator().apply(&v).unwrap().coeffs();
        let d = (u.into_inner() - v.coeffs()).norm();
        prop_assert!(du.norm() <= n * d * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn eigenvalue_sign_follows_the_slope_near_folds(c in -3.0f64..3.0) {
        let (cfg, inst) = convex();
        let ps = inst.problem().unwrap();
        let mut z0 = pg(ps);
        z0[1] += c;
        let model = FiberModel::new(ps, cfg.solve_options());
        let samples = model.sample(&z0, &uniform_grid(cfg.fiber.t_min, cfg.fiber.t_max, 121)).unwrap();
        let cps = classified_critical_points(&model, &z0, &samples, &cfg.analysis).unwrap();
        prop_assert_eq!(cps.len(), 1);
        prop_assert_eq!(cps[0].morin_order, Some(1));
        let link = verify_spectral_link(&model, &z0, &samples, &cps, 6.0, cfg.link.gap_tol).unwrap();
        prop_assert!(link.ok(), "{:?}", link.disagreements);
        prop_assert_eq!(link.tracked_sign_changes, 1);
    }
}
