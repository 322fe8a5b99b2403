//! Property tests against independent oracles.

use proptest::prelude::*;

use optexec::config::RunConfig;
use optexec::model::{
    admissible_alpha_interval, compute_c, second_order_condition, t_max, CorrelationTerm, Horizon,
};
use optexec::policy::{buy_sell_boundary, optimal_controls};
use optexec::schedule::{ScheduleSpec, WeightSpec};
use optexec::sim::{pnl_consistency, simulate_path, ConstantRates, PolicyKind, SimConfig};
use optexec::value::{solve_constant_closed_form, solve_scheduled};
use optexec::{ModelParams, PenaltyParams};

fn impacts() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (0.01f64..0.5, 0.01f64..0.5, 0.0f64..0.6, 0.0f64..1e-2, 0.0f64..1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn c_numerator_symmetric_denominator_not((eta1, eta2, alpha, beta1, beta2) in impacts()) {
        let m = ModelParams { eta1, eta2, ..ModelParams::baseline() };
        let p = PenaltyParams { alpha, beta1, beta2, ..PenaltyParams::baseline(&m) };
        let ms = ModelParams { eta1: eta2, eta2: eta1, ..m };
        let ps = PenaltyParams { beta1: beta2, beta2: beta1, ..p };
        let num = compute_c(&m, &p) * 2.0 * (eta1 + beta1);
        let num_s = compute_c(&ms, &ps) * 2.0 * (eta2 + beta2);
        prop_assert!((num - num_s).abs() <= 1e-12 * (1.0 + num.abs()));
    }

    #[test]
    fn c_positive_iff_alpha_admissible((eta1, eta2, alpha, beta1, beta2) in impacts()) {
        let m = ModelParams { eta1, eta2, ..ModelParams::baseline() };
        let p = PenaltyParams { alpha, beta1, beta2, ..PenaltyParams::baseline(&m) };
        let iv = admissible_alpha_interval(&m, &p);
        let margin = (alpha - iv.lo).abs().min((alpha - iv.hi).abs());
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(compute_c(&m, &p) > 0.0, iv.contains(alpha));
    }

    /// The second-order condition holds exactly when both eigenvalues of the
    /// Hessian of the Hamiltonian in `(v, L)` are negative.
    #[test]
    fn second_order_condition_matches_eigenvalues(
        (eta1, eta2, alpha, beta1, beta2) in impacts(),
        m1 in 0.0f64..50.0,
        a in -5e-3f64..5e-3,
    ) {
        let m = ModelParams { eta1, eta2, m1, ..ModelParams::baseline() };
        let p = PenaltyParams { alpha, beta1, beta2, ..PenaltyParams::baseline(&m) };
        prop_assume!(compute_c(&m, &p) > 0.0);
        let psi = m1 * m1 * (2.0 * a + m.gamma);
        let a11 = -2.0 * (eta1 + beta1);
        let a22 = psi - 2.0 * (eta2 + beta2);
        let a12 = alpha - eta1 - eta2;
        let mean = 0.5 * (a11 + a22);
        let radius = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
        let top = mean + radius;
        prop_assume!(top.abs() > 1e-9);
        prop_assert_eq!(second_order_condition(a, &m, &p), top < 0.0);
    }

    #[test]
    fn t_max_increases_with_beta(m1 in 1.0f64..3000.0, b in 1e-6f64..1e-1, factor in 1.01f64..10.0) {
        let m = ModelParams { m1, ..ModelParams::baseline() };
        let p = PenaltyParams::baseline(&m).with_beta(b);
        let lo = t_max(&m, &p).unwrap();
        let hi = t_max(&m, &p.with_beta(b * factor)).unwrap();
        match (lo, hi) {
            (Horizon::Bounded(lo), Horizon::Bounded(hi)) => prop_assert!(hi > lo),
            // C does not depend on beta, so an unbounded horizon stays unbounded
            (Horizon::Bounded(_) | Horizon::Unbounded, Horizon::Unbounded) => {}
            other => prop_assert!(false, "horizon shrank with beta: {:?}", other),
        }
    }

    #[test]
    fn rates_are_affine_in_position(t in 0.0f64..3600.0, x1 in -2e4f64..2e4, x2 in -2e4f64..2e4) {
        let m = ModelParams::baseline().with_constant_uncertainty(0.1);
        let p = PenaltyParams::baseline(&m);
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 361).unwrap();
        let e1 = optimal_controls(&cf, &m, &p, t, x1).unwrap();
        let e2 = optimal_controls(&cf, &m, &p, t, x2).unwrap();
        let em = optimal_controls(&cf, &m, &p, t, 0.5 * (x1 + x2)).unwrap();
        let scale = 1.0 + e1.v_star.abs() + e2.v_star.abs() + e1.l_star.abs() + e2.l_star.abs();
        prop_assert!((em.v_star - 0.5 * (e1.v_star + e2.v_star)).abs() < 1e-10 * scale);
        prop_assert!((em.l_star - 0.5 * (e1.l_star + e2.l_star)).abs() < 1e-10 * scale);
    }

    #[test]
    fn rate_signs_follow_boundary(
        eta in 0.02f64..0.3,
        rho in -0.9f64..0.9,
        i in 0usize..360,
        x in -3e4f64..3e4,
    ) {
        let m = ModelParams { eta1: eta, eta2: eta, rho, ..ModelParams::baseline().with_constant_uncertainty(0.1) };
        let base = PenaltyParams::baseline(&m);
        let iv = admissible_alpha_interval(&m, &base);
        let p = PenaltyParams { alpha: 0.5 * (iv.lo.max(0.0) + iv.hi), ..base };
        let cf = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 361).unwrap();
        let t = cf.grid[i];
        let boundary = buy_sell_boundary(&m, &p, CorrelationTerm::Consistent, &[t]).unwrap().p[0];
        prop_assume!((x - boundary).abs() > 1e-3);
        let e = optimal_controls(&cf, &m, &p, t, x).unwrap();
        let s = (x - boundary).signum();
        prop_assert_eq!(e.v_star.signum(), s);
        prop_assert_eq!(e.l_star.signum(), s);
        let ratio = (2.0 * p.beta2 + p.alpha) / (2.0 * p.beta1 + p.alpha);
        prop_assert!((e.v_star / e.l_star - ratio).abs() < 1e-9 * ratio);
    }

    #[test]
    fn deterministic_pnl_identity(v in -5.0f64..5.0, l in -5.0f64..5.0, mu in -1e-5f64..1e-5) {
        let m = ModelParams { sigma: 0.0, mu, ..ModelParams::baseline() };
        let solvable = ModelParams { sigma: 0.005, ..m };
        let p = PenaltyParams::baseline(&m);
        let cf = solve_constant_closed_form(&solvable, &p, CorrelationTerm::Consistent, 101).unwrap();
        let cfg = SimConfig::new(100, 1, 1).with_policy(PolicyKind::user(ConstantRates { v, l }));
        let path = simulate_path(&m, &p, &cf, &cfg, 0).unwrap();
        // the direct form cancels terms of size x0 * S0
        let scale = m.x0 * m.s0;
        prop_assert!(pnl_consistency(&path) < 1e-13 * scale);
        let identity = path.compensated_pnl - path.pnl_direct
            - path.penalty_integral - path.objective_terms.terminal_penalty;
        prop_assert!(identity.abs() <= 1e-10 * (1.0 + path.compensated_pnl.abs()));
    }

    #[test]
    fn tracking_penalty_never_positive(w in 0.0f64..1e-3, seed in 0u64..1000) {
        let m = ModelParams::baseline().with_constant_uncertainty(0.1);
        let p = PenaltyParams::baseline(&m);
        let spec = ScheduleSpec::linear(m.x0, m.horizon).unwrap();
        let weight = WeightSpec::constant(w).unwrap();
        let coeffs = solve_scheduled(&m, &p, CorrelationTerm::Consistent, &spec, &weight, 361).unwrap();
        let path = simulate_path(&m, &p, &coeffs, &SimConfig::new(360, 1, seed), 0).unwrap();
        prop_assert!(path.objective_terms.tracking_penalty <= 0.0);
    }

    #[test]
    fn config_round_trip(
        p0 in 0.0f64..0.5,
        beta in 1e-4f64..1.0,
        seed in 0u64..(i64::MAX as u64),
        steps in 1usize..10_000,
    ) {
        let text = format!("[model]\np0 = {p0}\n[penalties]\nbeta = {beta}\n[sim]\nseed = {seed}\nsteps = {steps}\n");
        let first = RunConfig::parse(&text).unwrap();
        let once = first.to_toml_string().unwrap();
        let second = RunConfig::parse(&once).unwrap();
        prop_assert_eq!(&second, &first.normalized());
        prop_assert_eq!(second.to_toml_string().unwrap(), once);
    }
}
