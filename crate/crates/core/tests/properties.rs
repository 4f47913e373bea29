use ema_market::equilibrium::{
    adulteration_equilibrium, adulteration_thresholds, reactive_adulteration_equilibrium, unilateral_dosage_profit,
    Regime,
};
use ema_market::exec::Execution;
use ema_market::model::{self, AdulterationCurve, MarketParams, QualityVector, ShockRealization};
use ema_market::numeric::linspace;
use ema_market::oracle::{random_instances, simulate_choices, OracleConfig, RandomInstance};
use ema_market::platform::{optimal_take_rate, TakeRateBranch};
use ema_market::policy::{
    min_admin_penalty, reliable_ep_profit, traceability_verdict, unreliable_ep_profit, usage_fee_band, ApRequirement,
    FeeBand, InspectionSplit,
};
use proptest::prelude::*;

fn instance(seed: u64, max_n: usize) -> RandomInstance {
    random_instances(seed, 1, max_n).pop().unwrap()
}

fn params_with_v0(n: usize, v0: f64) -> MarketParams {
    MarketParams::new(n, 1.0 + 0.5 / n as f64, 0.1 / n as f64, 2.0, 1.0, 0.5, v0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shares_and_outside_sum_to_one(
        qprs in prop::collection::vec(1e-3f64..1e3, 1..12),
        v0 in 1e-2f64..1e2,
        q in 1e-2f64..1e2,
    ) {
        let p = params_with_v0(qprs.len().max(2), v0);
        let s = model::choice_probabilities(&p, &qprs, ShockRealization::new(q).unwrap()).unwrap();
        let outside = v0 / (v0 + q * qprs.iter().sum::<f64>());
        prop_assert!((s.iter().sum::<f64>() + outside - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn shares_are_scale_free(
        qprs in prop::collection::vec(1e-3f64..1e3, 2..12),
        v0 in 1e-2f64..1e2,
        c in 1e-3f64..1e3,
    ) {
        let q = ShockRealization::EXPECTED;
        let a = model::choice_probabilities(&params_with_v0(qprs.len(), v0), &qprs, q).unwrap();
        let scaled: Vec<f64> = qprs.iter().map(|v| v * c).collect();
        let b = model::choice_probabilities(&params_with_v0(qprs.len(), v0 * c), &scaled, q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn demand_is_affine_with_slope_minus_rho(seed in any::<u64>(), i in 0usize..5, dx in 0.0f64..1.0) {
        let inst = instance(seed, 5);
        let n = inst.params.n;
        let mut x = linspace(0.0, 1.0, n);
        let i = i % n;
        x[i] = 0.0;
        let d0 = model::total_demand(&inst.params, &x).unwrap();
        x[i] = dx;
        let d1 = model::total_demand(&inst.params, &x).unwrap();
        prop_assert!((d1 - d0 + inst.params.rho * dx).abs() <= 1e-14);
    }

    #[test]
    fn negative_margin_means_loss(seed in any::<u64>()) {
        let inst = instance(seed, 5);
        let p = inst.params.with_theta(10.0).unwrap().with_t(inst.params.n_f64()).unwrap();
        // risk 10 exceeds any keep share, so full adulteration loses money
        let n = p.n;
        let dosages = vec![1.0; n];
        let prices = vec![1.0; n];
        let v = inst.take_rate;
        prop_assume!(1.0 - v - p.penalty_risk() < 0.0);
        let profit = model::seller_profit(&p, &inst.curve, &inst.quality, 0, &dosages, &prices, v, ShockRealization::EXPECTED).unwrap();
        prop_assert!(profit < 0.0);
    }

    #[test]
    fn revenue_motive_endpoint_implies_grid(
        n in 2usize..50,
        a in 0.01f64..0.6,
        b in 2.05f64..25.0,
        g in 0.05f64..0.95,
        r in 0.01f64..0.99,
    ) {
        let nf = n as f64;
        let gamma = 1.0 + (nf / (nf - 1.0) - 1.0) * g;
        let p = MarketParams::new(n, gamma, r / nf, 2.0, 1.0, 0.5, 1.0).unwrap();
        let rep = model::validate(&p, &AdulterationCurve::new(a, b).unwrap());
        prop_assert!(!rep.revenue_motive_endpoint || rep.revenue_motive_grid);
    }

    #[test]
    fn regime_edges_are_continuous(seed in any::<u64>()) {
        let inst = instance(seed, 6);
        let p = inst.params;
        let v = inst.take_rate;
        let th = adulteration_thresholds(&p, &inst.curve).unwrap();
        let nf = p.n_f64();
        let at_risk = |r: f64| -> Option<f64> {
            let t = r * nf / p.theta;
            if !(0.0..=nf).contains(&t) {
                return None;
            }
            adulteration_equilibrium(&p.with_t(t).unwrap(), &inst.curve, v).ok().map(|e| e.dosage)
        };
        if let Some(x) = at_risk(th.tau1 * (1.0 - v) - 1e-6) {
            prop_assert!(x < 1e-2, "near the zero edge x = {x}");
        }
        if let Some(x) = at_risk(th.tau2 * (1.0 - v) + 1e-6) {
            prop_assert!(x > 1.0 - 1e-2, "near the full edge x = {x}");
        }
    }

    #[test]
    fn reactive_dosage_ignores_the_shock(seed in any::<u64>()) {
        let inst = instance(seed, 5);
        let p = inst.params;
        let v = inst.take_rate;
        let x = adulteration_equilibrium(&p, &inst.curve, v).unwrap().dosage;
        let others = (p.n - 1) as f64 * x;
        let grid = linspace(0.0, 1.0, 401);
        let mut argmaxes = Vec::new();
        for q in [0.1, 1.0, 10.0] {
            let q = ShockRealization::new(q).unwrap();
            prop_assert_eq!(reactive_adulteration_equilibrium(&p, &inst.curve, v, q).unwrap().dosage, x);
            let vals: Vec<f64> = grid
                .iter()
                .map(|&own| unilateral_dosage_profit(&p, &inst.curve, inst.quality.alphas()[0], own, others, v, q).unwrap())
                .collect();
            let k = (0..vals.len()).fold(0, |b, k| if vals[k] > vals[b] { k } else { b });
            argmaxes.push(k);
        }
        prop_assert!(argmaxes.windows(2).all(|w| w[0] == w[1]), "{argmaxes:?}");
    }

    #[test]
    fn dosage_falls_with_take_rate(seed in any::<u64>()) {
        let inst = instance(seed, 8);
        let xs: Vec<f64> = linspace(0.0, inst.params.take_rate_cap, 101)
            .into_iter()
            .map(|v| adulteration_equilibrium(&inst.params, &inst.curve, v).unwrap().dosage)
            .collect();
        prop_assert!(xs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn decision_table_is_self_consistent(seed in any::<u64>()) {
        let inst = instance(seed, 8);
        if let Ok(d) = optimal_take_rate(&inst.params, &inst.curve, &inst.quality) {
            let eq = adulteration_equilibrium(&inst.params, &inst.curve, d.take_rate).unwrap();
            prop_assert_eq!(eq.dosage, d.dosage);
            prop_assert_eq!(eq.regime, d.regime);
            if d.branch == TakeRateBranch::AdulterationBoundary {
                let gap = inst.params.penalty_risk() - d.bounds.tau2 * (1.0 - d.take_rate);
                prop_assert!(gap.abs() <= 1e-12, "{gap}");
            }
        }
    }

    #[test]
    fn minimal_penalty_deters(seed in any::<u64>(), te in 0.0f64..1.0, ta in 0.0f64..1.0) {
        let inst = instance(seed, 6);
        let p = inst.params;
        let nf = p.n_f64();
        let split = InspectionSplit::new(te * nf * 0.5, ta * nf * 0.5, &p).unwrap();
        let v = inst.take_rate;
        let Ok(ap) = min_admin_penalty(&p, &inst.curve, &inst.quality, split, v) else { return Ok(()) };
        let reliable = reliable_ep_profit(&p, &inst.curve, &inst.quality, split, v).unwrap();
        let unreliable = |a: f64| unreliable_ep_profit(&p, &inst.curve, &inst.quality, split, v, a).unwrap();
        match ap.requirement {
            ApRequirement::NotNecessary => {
                prop_assert!(matches!(ap.scenario, 1 | 6));
                prop_assert!(unreliable(0.0) <= reliable + 1e-12 * reliable.abs());
            }
            ApRequirement::Minimal(a) => {
                prop_assert!(unreliable(a + 1e-9) <= reliable + 1e-12 * reliable.abs());
                if ap.cover_up_gain > 0.0 && a > 1e-3 {
                    prop_assert!(unreliable(a - 1e-3) > reliable);
                }
            }
        }
    }

    #[test]
    fn fee_band_sandwich(theta in 1.5f64..6.0, k in 22.0f64..30.0, share in 0.0f64..1.0) {
        // traceability only pays off in a narrow band of theta * t
        let p = MarketParams::new(100, 99.9 / 99.0, 0.0021, theta, k / theta, 0.3, 1.0).unwrap();
        let c = AdulterationCurve::new(0.05, 15.0).unwrap();
        let q = QualityVector::synthetic(100, 2_021).unwrap();
        let Ok(v) = traceability_verdict(&p, &c, &q, 0.0) else { return Ok(()) };
        if !v.adds_value {
            return Ok(());
        }
        if let Ok(FeeBand::Band { lower, upper, .. }) = usage_fee_band(&p, &c, &q, share * v.c_e_hat) {
            prop_assert!(lower <= upper * (1.0 + 1e-12), "{lower} > {upper}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic(seed in any::<u64>()) {
        let p = params_with_v0(3, 1.0);
        let cfg = OracleConfig { rng_seed: seed, mc_draws: 25_000, ..Default::default() };
        let q = ShockRealization::EXPECTED;
        let a = simulate_choices(&p, &[0.3, 0.2, 0.1], q, &cfg, Execution::Sequential).unwrap();
        let b = simulate_choices(&p, &[0.3, 0.2, 0.1], q, &cfg, Execution::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn random_instances_satisfy_assumptions() {
    for inst in random_instances(3, 200, 10) {
        assert!(model::validate(&inst.params, &inst.curve).all_pass());
        assert_eq!(inst.quality.len(), inst.params.n);
        assert!(inst.take_rate <= inst.params.take_rate_cap);
    }
}

#[test]
fn interior_regime_exists_in_random_draws() {
    let interior = random_instances(5, 200, 10)
        .iter()
        .filter(|i| adulteration_equilibrium(&i.params, &i.curve, i.take_rate).unwrap().regime == Regime::Interior)
        .count();
    assert!(interior > 10, "{interior}");
}

#[test]
fn synthetic_quality_is_sorted() {
    let q = QualityVector::synthetic(50, 1).unwrap();
    assert!(q.alphas().windows(2).all(|w| w[0] >= w[1]));
}
