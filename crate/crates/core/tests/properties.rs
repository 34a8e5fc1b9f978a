use std::sync::Arc;

use proptest::prelude::*;

use momenta::analysis::{fit_rate, Metric, MetricRow, RunRecord};
use momenta::block::{exact_block_mean, BernoulliBlock, BlockPolicy, MultiCoordinate, SingleCoordinate};
use momenta::lambda::{closed_form_lambda, iterate_lambda, verify_lemma_a1, verify_lemma_a2};
use momenta::objectives::{
    dot, make_double_well, make_kinked_quadratic, make_pl_nonconvex_1d, make_quadratic, norm,
    norm_sq, Objective,
};
use momenta::oracles::{AdditiveNoiseOracle, GradientOracle, SpsaOracle};
use momenta::schedules::Schedule;
use momenta::unified::{
    eigen_residuals, heavy_ball_reference, nesterov_reference, u_recursion_residual, unified_step,
    UnifiedParams, UnifiedState,
};

fn objectives() -> Vec<Arc<dyn Objective>> {
    vec![
        Arc::new(make_quadratic(&[1.0, 4.0, 0.5]).unwrap()),
        Arc::new(make_pl_nonconvex_1d()),
        Arc::new(make_double_well(3).unwrap()),
        Arc::new(make_kinked_quadratic(&[1.0, 2.0, 3.0], 0.4).unwrap()),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, d)
}

fn shift(x: &[f64], y: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + s * b).collect()
}

proptest! {
    #[test]
    fn gradients_match_central_differences(x in point(3), which in 0usize..4) {
        let obj = &objectives()[which];
        let x = &x[..obj.dim()];
        // keep off the kink, where the gradient is one-sided
        prop_assume!(which != 3 || x.iter().all(|v| v.abs() > 1e-3));
        let g = obj.gradient(x);
        let h = 1e-6;
        for i in 0..obj.dim() {
            let mut e = vec![0.0; obj.dim()];
            e[i] = 1.0;
            let fd = (obj.value(&shift(x, &e, h)) - obj.value(&shift(x, &e, -h))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coord {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn quadratic_upper_bound(x in point(3), y in point(3), which in 0usize..4) {
        let obj = &objectives()[which];
        let d = obj.dim();
        let (x, y) = (&x[..d], &y[..d]);
        let phi: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let lhs = (obj.value(y) - obj.value(x) - dot(&obj.gradient(x), &phi)).abs();
        prop_assert!(lhs <= 0.5 * obj.lipschitz() * norm_sq(&phi) + 1e-9 * (1.0 + obj.value(x).abs()));
    }

    #[test]
    fn pl_inequality(x in point(3), which in 0usize..4) {
        let obj = &objectives()[which];
        if let Some(k) = obj.pl_constant() {
            let x = &x[..obj.dim()];
            let g = norm_sq(&obj.gradient(x));
            prop_assert!(g >= k * (obj.value(x) - obj.j_star()) - 1e-12);
        }
    }

    #[test]
    fn eigen_and_u_identities(
        a in 0.0..3.0f64, mu in 0.0..0.99f64, b in 0.1..3.0f64, eps in -1.0..1.0f64,
        alpha in 1e-3..1.0f64, t in 0u64..500,
        w in point(3), v in point(3), h in point(3),
    ) {
        let e = eigen_residuals(a, mu).unwrap();
        prop_assert!(e.decoupling <= 1e-12 && e.inverse <= 1e-12);
        let p = UnifiedParams::custom(
            Schedule::power_law(a, -0.5),
            Schedule::constant(b),
            Schedule::constant(eps),
            Schedule::shifted_power_law(-0.5 * mu, -1.0, mu, 1.0),
            Schedule::constant(alpha),
        );
        let obj = make_quadratic(&[1.0, 2.0, 3.0]).unwrap();
        let s = UnifiedState::at(t, w, v, &p, &obj).unwrap();
        let n = unified_step(&s, &p, &h, &obj).unwrap();
        prop_assert!(u_recursion_residual(&s, &n, &p, &h).unwrap() <= 1e-12 * (1.0 + norm(&n.u)));
        for i in 0..3 {
            prop_assert!((n.u[i] - n.k * n.v[i] - n.w[i]).abs() <= 1e-12 * (1.0 + n.u[i].abs()));
        }
    }

    #[test]
    fn presets_match_direct_recursions(
        mu_lim in 0.1..0.95f64, mu_amp in 0.0..0.1f64, alpha0 in 0.01..0.5f64,
        hs in prop::collection::vec(point(2), 200),
    ) {
        let obj = make_quadratic(&[1.0, 1.0]).unwrap();
        let mu = Schedule::shifted_power_law(-mu_amp, -1.0, mu_lim, 1.0);
        let alpha = Schedule::power_law(alpha0, -0.7);
        let theta0 = vec![1.0, -1.0];

        let p = UnifiedParams::shb(mu.clone(), alpha.clone());
        let reference = heavy_ball_reference(&theta0, &mu, &alpha, &hs);
        let mut s = UnifiedState::new(theta0.clone(), None, &p, &obj).unwrap();
        for (t, h) in hs.iter().enumerate() {
            s = unified_step(&s, &p, h, &obj).unwrap();
            let r = &reference[t + 1];
            for (x, y) in s.theta.iter().zip(r) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }

        let p = UnifiedParams::snag(mu.clone(), alpha.clone());
        let reference = nesterov_reference(&theta0, &mu, &alpha, &hs);
        let mut s = UnifiedState::new(theta0, None, &p, &obj).unwrap();
        for (t, h) in hs.iter().enumerate() {
            s = unified_step(&s, &p, h, &obj).unwrap();
            let (theta, look) = &reference[t + 1];
            for i in 0..2 {
                prop_assert!((s.theta[i] - theta[i]).abs() <= 1e-10 * (1.0 + theta[i].abs()));
                prop_assert!((s.w[i] - look[i]).abs() <= 1e-10 * (1.0 + look[i].abs()));
            }
        }
    }

    #[test]
    fn block_expectation_is_exact(h in point(4), d in 1usize..=4, n in 1usize..=3, rho in 0.05..1.0f64) {
        let h = &h[..d];
        let policies: Vec<Box<dyn BlockPolicy>> = vec![
            Box::new(SingleCoordinate::new(0)),
            Box::new(MultiCoordinate::new(n, 0).unwrap()),
            Box::new(BernoulliBlock::new(Schedule::constant(rho), 0).unwrap()),
        ];
        for p in &policies {
            let m = exact_block_mean(p.as_ref(), h, 0).unwrap();
            for (a, b) in m.iter().zip(h) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn masked_output_stays_on_support(seed in any::<u64>(), t in 0u64..10_000) {
        let p = MultiCoordinate::new(2, seed).unwrap();
        let sel = p.draw(5, t, 0).unwrap();
        let y = sel.apply(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        for (yi, on) in y.iter().zip(sel.support()) {
            prop_assert_eq!(*yi != 0.0, on);
        }
    }

    #[test]
    fn spsa_with_block_support_perturbs_only_the_block(seed in any::<u64>(), t in 0u64..1000) {
        let obj: Arc<dyn Objective> = Arc::new(make_quadratic(&[1.0, 2.0, 3.0]).unwrap());
        let o = SpsaOracle::new(obj, Schedule::constant(0.1), 0.1, seed).unwrap();
        let h = o.sample_on(&[1.0, 1.0, 1.0], t, 0, Some(&[true, false, true])).unwrap();
        prop_assert_eq!(h[1], 0.0);
    }

    #[test]
    fn oracle_draws_depend_only_on_key(seed in any::<u64>(), t in 0u64..1000, rep in 0u64..100) {
        let obj: Arc<dyn Objective> = Arc::new(make_quadratic(&[1.0, 2.0]).unwrap());
        let o = AdditiveNoiseOracle::new(obj, Schedule::constant(1.0), seed);
        let first = o.sample(&[0.5, 0.5], t, rep).unwrap();
        let _ = o.sample(&[0.5, 0.5], t + 1, rep).unwrap();
        prop_assert_eq!(first, o.sample(&[0.5, 0.5], t, rep).unwrap());
    }

    #[test]
    fn table_repeats_last_value(values in prop::collection::vec(-10.0..10.0f64, 1..20), t in 0u64..1000) {
        let s = Schedule::table(values.clone());
        let expect = values[(t as usize).min(values.len() - 1)];
        prop_assert_eq!(s.eval(t), expect);
    }

    #[test]
    fn rate_fit_is_scale_invariant(p in 0.1..2.0f64, scale in 1.0..100.0f64) {
        let rec = |c: f64| {
            let mut m = f64::INFINITY;
            RunRecord {
                config_hash: String::new(),
                seed: 0,
                rows: (0..=500u64).map(|t| {
                    let j = c * (t as f64 + 1.0).powf(-p);
                    m = m.min(j);
                    MetricRow { t, j_theta: j, grad_norm: j, v_norm_sq: 0.0, lyapunov: j, running_min_grad: m, alpha: 0.0 }
                }).collect(),
                divergence_step: None,
                lyapunov_violations: 0,
                last_lyapunov_violation: None,
            }
        };
        let a = fit_rate(&rec(1.0), Metric::JTheta, 0.5, 0.5).unwrap().fitted_exponent;
        let b = fit_rate(&rec(scale), Metric::JTheta, 0.5, 0.5).unwrap().fitted_exponent;
        prop_assert!((a - b).abs() < 1e-3);
    }
}

fn decreasing_momentum() -> impl Strategy<Value = Schedule> {
    (0.3..0.95f64, 0.9..0.999f64).prop_map(|(m0, r)| Schedule::geometric(m0, r, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn closed_form_matches_iteration(
        lim in 0.2..0.9f64, amp in -0.15..0.09f64, rate in 0.5..0.99f64, lambda0 in 0.1..5.0f64,
    ) {
        let mu = Schedule::geometric(amp, rate, lim);
        let tr = iterate_lambda(&mu, &Schedule::constant(1.0), lambda0, 100).unwrap();
        let cf = closed_form_lambda(&mu, lambda0, tr.lambda[1], 100).unwrap();
        let it = tr.lambda[100];
        prop_assert!((cf - it).abs() <= 1e-9 * it.abs().max(1.0), "closed form {cf} vs iteration {it}");
    }
}

proptest! {
    #[test]
    fn lambda_increases_under_decreasing_momentum(mu in decreasing_momentum()) {
        let r = verify_lemma_a1(&mu, 1e6, 400).unwrap();
        prop_assert!(r.hypothesis_ok);
        prop_assert!(r.strictly_increasing);
        if let (Some(i), Some(b)) = (r.first_index, r.bound_index) {
            prop_assert!(i <= b);
        }
    }

    #[test]
    fn negative_one_plus_lambda_is_absorbing(start in 0.3..0.6f64, gap in 0.1..0.3f64, rate in 0.5..0.95f64) {
        let mu = Schedule::geometric(-gap, rate, start + gap);
        let r = verify_lemma_a2(&mu, None, 500).unwrap();
        prop_assert!(r.descending_while_positive);
        if r.t_first.is_some() {
            prop_assert!(r.absorbing);
        }
    }

    #[test]
    fn eta_is_a_constant_multiple_of_alpha(mu in 0.1..0.95f64, p in 0.5..1.0f64) {
        let m = Schedule::constant(mu);
        let alpha = Schedule::power_law(1.0, -p);
        let tr = iterate_lambda(&m, &alpha, mu / (1.0 - mu), 200).unwrap();
        let ratio = tr.eta[0] / alpha.eval(0);
        // the fixed point is repelling: rounding error grows by 1/mu per step
        for t in 0..=200u64 {
            let budget = 1e-13 * (1.0 / mu).powi(t as i32 + 1);
            if budget > 1e-6 {
                break;
            }
            prop_assert!((tr.eta[t as usize] / alpha.eval(t) - ratio).abs() <= budget * ratio.max(1.0));
        }
    }
}
