//! Seller-side equilibria: the simultaneous pricing game and the symmetric
//! adulteration (dosage) game.
//!
//! Prices follow the closed form `p_i = (alpha_hat_i q / V*)^(1/gamma)`, which
//! equalises every seller's quality-price ratio at `V*` and gives each seller
//! the share `(gamma - 1)/gamma`. The dosage game has a threshold structure in
//! the overall penalty risk `r = theta t / n`:
//!
//! * `r >= tau1 (1 - vartheta)`: nobody adulterates,
//! * `r <= tau2 (1 - vartheta)`: everybody adulterates fully,
//! * otherwise the common dosage is the root in `(0, 1)` of
//!   `(h'/(gamma h) - rho/(1 - n rho x)) (1 - vartheta - r x) - r`.

use serde::Serialize;

use crate::model::{self, MarketParams, QualityGain, QualityVector, ShockRealization, BOUNDARY_TOL};
use crate::numeric::bisect;
use crate::{Error, Result};

pub const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 200;
const BRACKET_EPS: f64 = 1e-12;
/// Grid resolution used to make sure the interior residual has one root.
const ROOT_SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    ZeroAdulterant,
    Interior,
    MaxAdulterant,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ZeroAdulterant => "ZeroAdulterant",
            Regime::Interior => "Interior",
            Regime::MaxAdulterant => "MaxAdulterant",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of the pricing game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingEquilibrium {
    pub v_star: f64,
    pub prices: Vec<f64>,
    pub share: f64,
}

/// Solve the pricing game for nominal qualities `alpha_hat` and shock `q`.
pub fn pricing_equilibrium(
    params: &MarketParams,
    nominal_qualities: &[f64],
    q: ShockRealization,
) -> Result<PricingEquilibrium> {
    if nominal_qualities.len() != params.n {
        return Err(Error::domain(format!("expected {} nominal qualities, got {}", params.n, nominal_qualities.len())));
    }
    if let Some(bad) = nominal_qualities.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::domain(format!("nominal qualities must be positive, got {bad}")));
    }
    let v_star = params.v_star()?;
    let inv_gamma = 1.0 / params.gamma;
    let prices = nominal_qualities.iter().map(|a| (a * q.value() / v_star).powf(inv_gamma)).collect();
    Ok(PricingEquilibrium { v_star, prices, share: params.equilibrium_share() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdulterationThresholds {
    pub tau1: f64,
    pub tau2: f64,
}

/// Scalar core of the dosage game. `n` is real so comparative statics can
/// difference along it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DosageKernel {
    pub n: f64,
    pub gamma: f64,
    pub rho: f64,
    pub theta: f64,
    pub t: f64,
}

impl DosageKernel {
    pub fn from_params(p: &MarketParams) -> Self {
        DosageKernel { n: p.n_f64(), gamma: p.gamma, rho: p.rho, theta: p.theta, t: p.t }
    }

    pub fn risk(&self) -> f64 {
        self.theta * self.t / self.n
    }

    pub fn thresholds(&self, curve: &impl QualityGain) -> AdulterationThresholds {
        let tau1 = curve.dh(0.0) / self.gamma - self.rho;
        let a = curve.dh(1.0) / (self.gamma * curve.h_max()) - self.rho / (1.0 - self.n * self.rho);
        AdulterationThresholds { tau1, tau2: a / (1.0 + a) }
    }

    pub fn residual(&self, curve: &impl QualityGain, take_rate: f64, x: f64) -> f64 {
        let r = self.risk();
        let marginal = curve.dh(x) / (self.gamma * curve.h(x)) - self.rho / (1.0 - self.n * self.rho * x);
        marginal * (1.0 - take_rate - r * x) - r
    }

    pub fn solve(&self, curve: &impl QualityGain, take_rate: f64) -> Result<DosageEquilibrium> {
        let AdulterationThresholds { tau1, tau2 } = self.thresholds(curve);
        let r = self.risk();
        let keep = 1.0 - take_rate;
        if r >= tau1 * keep - BOUNDARY_TOL {
            return Ok(DosageEquilibrium { dosage: 0.0, regime: Regime::ZeroAdulterant });
        }
        if r <= tau2 * keep + BOUNDARY_TOL {
            return Ok(DosageEquilibrium { dosage: 1.0, regime: Regime::MaxAdulterant });
        }
        let f = |x: f64| self.residual(curve, take_rate, x);
        let (lo, hi) = (BRACKET_EPS, 1.0 - BRACKET_EPS);
        let scan = crate::numeric::linspace(lo, hi, ROOT_SCAN_POINTS);
        let changes = scan.windows(2).filter(|w| f(w[0]).signum() != f(w[1]).signum()).count();
        if changes > 1 {
            return Err(Error::Consistency(format!(
                "dosage residual changes sign {changes} times on (0, 1); interior root not unique"
            )));
        }
        let root = bisect(f, lo, hi, ROOT_TOL, ROOT_MAX_ITER)?;
        Ok(DosageEquilibrium { dosage: root.x, regime: Regime::Interior })
    }
}

/// Regime thresholds `(tau1, tau2)`.
///
/// Requires a finite `V*` and `tau1 > tau2 > 0`; the latter holds whenever
/// the revenue-motive assumption does, but is checked directly so that
/// parameter points violating only the gain assumption remain solvable.
pub fn adulteration_thresholds(params: &MarketParams, curve: &impl QualityGain) -> Result<AdulterationThresholds> {
    params.v_star()?;
    let th = DosageKernel::from_params(params).thresholds(curve);
    if !(th.tau1 > th.tau2 && th.tau2 > 0.0) {
        return Err(Error::precondition(format!("thresholds out of order: tau1 = {}, tau2 = {}", th.tau1, th.tau2)));
    }
    Ok(th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DosageEquilibrium {
    pub dosage: f64,
    pub regime: Regime,
}

/// Interior-regime residual at `x`; positive means the marginal seller
/// wants more adulterant.
pub fn dosage_residual(params: &MarketParams, curve: &impl QualityGain, take_rate: f64, x: f64) -> f64 {
    DosageKernel::from_params(params).residual(curve, take_rate, x)
}

/// Symmetric preemptive adulteration equilibrium at take rate `vartheta`.
pub fn adulteration_equilibrium(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
) -> Result<DosageEquilibrium> {
    params.check_take_rate(take_rate)?;
    adulteration_thresholds(params, curve)?;
    DosageKernel::from_params(params).solve(curve, take_rate)
}

/// Symmetric dosage with the seller count replaced by a real `n`, other
/// parameters unchanged. The dosage game only sees `n` through the risk
/// `theta t / n` and the externality `n rho`, so it stays well defined where
/// the pricing game would not (e.g. `gamma >= n/(n-1)`).
pub fn dosage_at_real_n(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
    n: f64,
) -> Result<DosageEquilibrium> {
    params.check_take_rate(take_rate)?;
    if !(n.is_finite() && n >= 2.0 && n >= params.t && n * params.rho < 1.0) {
        return Err(Error::domain(format!("real seller count {n} needs n >= max(2, t) and n rho < 1")));
    }
    let k = DosageKernel { n, ..DosageKernel::from_params(params) };
    let th = k.thresholds(curve);
    if !(th.tau1 > th.tau2 && th.tau2 > 0.0) {
        return Err(Error::precondition(format!(
            "thresholds out of order at n = {n}: tau1 = {}, tau2 = {}",
            th.tau1, th.tau2
        )));
    }
    k.solve(curve, take_rate)
}

/// Reactive adulteration (decided after the shock `q` is observed). The
/// realised factor `(q alpha_hat / V*)^(1/gamma)` multiplies profit and drops
/// out of the first-order condition, so the dosage matches the preemptive one.
pub fn reactive_adulteration_equilibrium(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
    q: ShockRealization,
) -> Result<DosageEquilibrium> {
    let _ = q;
    adulteration_equilibrium(params, curve, take_rate)
}

/// Seller profit as a function of its own dosage when every seller reprices
/// according to the pricing game (all QPRs equal `V*`, all shares `S*`):
/// `(alpha h(x_i) q / V*)^(1/gamma) S* (1 - rho (x_i + sum others)) (1 - vartheta - r x_i)`.
pub fn unilateral_dosage_profit(
    params: &MarketParams,
    curve: &impl QualityGain,
    alpha: f64,
    own: f64,
    others_sum: f64,
    take_rate: f64,
    q: ShockRealization,
) -> Result<f64> {
    let v_star = params.v_star()?;
    let price = (alpha * curve.h(own) * q.value() / v_star).powf(1.0 / params.gamma);
    let demand = 1.0 - params.rho * (own + others_sum);
    Ok(price * params.equilibrium_share() * demand * (1.0 - take_rate - params.penalty_risk() * own))
}

/// Signs of the dosage sensitivities at an interior point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub dosage: f64,
    pub d_take_rate: f64,
    pub d_theta: f64,
    pub d_t: f64,
    pub d_rho: f64,
    pub d_n: f64,
    /// Names of derivatives whose sign contradicts the expected direction.
    pub violations: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ComparativeStatics {
    Computed(SensitivityReport),
    NotApplicable { regime: Regime },
}

const FD_REL_STEP: f64 = 1e-4;

fn fd_derivative<F: Fn(f64) -> Result<f64>>(f: F, at: f64) -> Result<f64> {
    if at == 0.0 {
        let h = FD_REL_STEP;
        return Ok((f(h)? - f(0.0)?) / h);
    }
    let h = FD_REL_STEP * at.abs();
    Ok((f(at + h)? - f(at - h)?) / (2.0 * h))
}

/// Finite-difference sensitivities of the interior dosage with respect to
/// the take rate, `theta`, `t`, `rho` and `n` (treated as real).
///
/// The dosage should fall in the first four and rise in `n` when `n >= 3`.
pub fn comparative_statics(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
) -> Result<ComparativeStatics> {
    let base = adulteration_equilibrium(params, curve, take_rate)?;
    if base.regime != Regime::Interior {
        return Ok(ComparativeStatics::NotApplicable { regime: base.regime });
    }
    let k = DosageKernel::from_params(params);
    let x_at = |k: DosageKernel, v: f64| k.solve(curve, v).map(|d| d.dosage);
    let d_take_rate = fd_derivative(|v| x_at(k, v), take_rate)?;
    let d_theta = fd_derivative(|v| x_at(DosageKernel { theta: v, ..k }, take_rate), k.theta)?;
    let d_t = fd_derivative(|v| x_at(DosageKernel { t: v, ..k }, take_rate), k.t)?;
    let d_rho = fd_derivative(|v| x_at(DosageKernel { rho: v, ..k }, take_rate), k.rho)?;
    let d_n = fd_derivative(|v| x_at(DosageKernel { n: v, ..k }, take_rate), k.n)?;

    let mut violations = Vec::new();
    for (name, d) in [("take_rate", d_take_rate), ("theta", d_theta), ("t", d_t), ("rho", d_rho)] {
        if d >= 0.0 {
            violations.push(name);
        }
    }
    if params.n >= 3 && d_n <= 0.0 {
        violations.push("n");
    }
    Ok(ComparativeStatics::Computed(SensitivityReport {
        dosage: base.dosage,
        d_take_rate,
        d_theta,
        d_t,
        d_rho,
        d_n,
        violations,
    }))
}

/// Check that a seller's preemptive profit is concave in its own dosage,
/// holding the other sellers' dosages fixed: all second differences on a
/// 1001-point grid must be `<= 1e-9` (relative to the profit scale).
pub fn concavity_check(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
    others: &[f64],
) -> Result<bool> {
    if others.len() + 1 != params.n {
        return Err(Error::domain(format!("expected {} other dosages, got {}", params.n - 1, others.len())));
    }
    model::total_demand(params, others)?;
    let others_sum: f64 = others.iter().sum();
    let values: Vec<f64> = (0..=1000)
        .map(|k| {
            unilateral_dosage_profit(
                params,
                curve,
                1.0,
                k as f64 / 1000.0,
                others_sum,
                take_rate,
                ShockRealization::EXPECTED,
            )
        })
        .collect::<Result<_>>()?;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(values.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] <= 1e-9 * scale))
}

/// Everything known about one parameter point once sellers have moved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumOutcome {
    pub take_rate: f64,
    pub v_star: f64,
    pub prices: Vec<f64>,
    pub share: f64,
    pub dosage: f64,
    pub regime: Regime,
    pub demand: f64,
    pub seller_profits: Vec<f64>,
    pub ep_profit: f64,
}

/// Solve both seller stages at a given take rate and shock realisation.
pub fn solve_market(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    take_rate: f64,
    q: ShockRealization,
) -> Result<EquilibriumOutcome> {
    quality.check_len(params)?;
    let dose = adulteration_equilibrium(params, curve, take_rate)?;
    let gain = curve.h(dose.dosage);
    let nominal: Vec<f64> = quality.alphas().iter().map(|a| a * gain).collect();
    let pricing = pricing_equilibrium(params, &nominal, q)?;
    let demand = 1.0 - params.n_f64() * params.rho * dose.dosage;
    let margin = 1.0 - take_rate - params.penalty_risk() * dose.dosage;
    let revenues: Vec<f64> = pricing.prices.iter().map(|p| p * pricing.share * demand).collect();
    let seller_profits = revenues.iter().map(|rev| rev * margin).collect();
    let ep_profit = take_rate * revenues.iter().sum::<f64>();
    Ok(EquilibriumOutcome {
        take_rate,
        v_star: pricing.v_star,
        prices: pricing.prices,
        share: pricing.share,
        dosage: dose.dosage,
        regime: dose.regime,
        demand,
        seller_profits,
        ep_profit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AdulterationCurve;
    use approx::assert_relative_eq;

    fn take_rate_market(t: f64) -> (MarketParams, AdulterationCurve) {
        (
            MarketParams::new(100, 99.9 / 99.0, 0.0029, 2.0, t, 0.9, 1.0).unwrap(),
            AdulterationCurve::new(0.1, 5.0).unwrap(),
        )
    }

    #[test]
    fn pricing_two_sellers() {
        let p = MarketParams::new(2, 1.5, 0.1, 2.0, 1.0, 0.5, 1.0).unwrap();
        let eq = pricing_equilibrium(&p, &[4.0, 2.0], ShockRealization::EXPECTED).unwrap();
        assert_relative_eq!(eq.v_star, 1.0, epsilon = 1e-15);
        assert_relative_eq!(eq.prices[0], 2.519_842_099_789_746, epsilon = 1e-12);
        assert_relative_eq!(eq.prices[1], 1.587_401_051_968_199, epsilon = 1e-12);
        assert_relative_eq!(eq.share, 1.0 / 3.0, epsilon = 1e-15);
        for (a, pr) in [4.0, 2.0].iter().zip(&eq.prices) {
            assert_relative_eq!(a / pr.powf(1.5), eq.v_star, epsilon = 1e-12);
        }
    }

    #[test]
    fn pricing_share_at_n31() {
        let p = MarketParams::new(31, 1.03, 0.005, 2.0, 1.0, 0.5, 1.0).unwrap();
        assert_relative_eq!(p.equilibrium_share(), 0.029_126_213_592_233, epsilon = 1e-14);
        assert_relative_eq!(31.0 * p.equilibrium_share(), 0.902_912_621_359_223, epsilon = 1e-13);
    }

    #[test]
    fn price_war_is_rejected() {
        let p = MarketParams::new(2, 3.0, 0.1, 2.0, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            pricing_equilibrium(&p, &[1.0, 1.0], ShockRealization::EXPECTED),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn reference_market_thresholds() {
        let (p, c) = take_rate_market(20.0);
        let th = adulteration_thresholds(&p, &c).unwrap();
        assert!((th.tau1 - 0.492_595).abs() < 1e-6, "{}", th.tau1);
        assert!((th.tau2 - 0.172_371).abs() < 1e-6, "{}", th.tau2);
    }

    #[test]
    fn threshold_limit() {
        let c = AdulterationCurve::new(0.1, 5.0).unwrap();
        let p = MarketParams::new(2, 1.000_001, 1e-9, 2.0, 1.0, 0.5, 1.0).unwrap();
        let th = adulteration_thresholds(&p, &c).unwrap();
        assert!((th.tau1 - c.dh(0.0)).abs() < 1e-5);
    }

    #[test]
    fn reference_market_regimes() {
        let (p, c) = take_rate_market(20.0);
        let zero = adulteration_equilibrium(&p, &c, 0.2).unwrap();
        assert_eq!(zero, DosageEquilibrium { dosage: 0.0, regime: Regime::ZeroAdulterant });
        let inner = adulteration_equilibrium(&p, &c, 0.0).unwrap();
        assert_eq!(inner.regime, Regime::Interior);
        assert!((inner.dosage - 0.160_105).abs() < 1e-5, "{}", inner.dosage);
        let (p0, _) = take_rate_market(0.0);
        let max = adulteration_equilibrium(&p0, &c, 0.05).unwrap();
        assert_eq!(max, DosageEquilibrium { dosage: 1.0, regime: Regime::MaxAdulterant });
    }

    #[test]
    fn reactive_matches_preemptive() {
        let (p, c) = take_rate_market(20.0);
        let pre = adulteration_equilibrium(&p, &c, 0.0).unwrap();
        for q in [0.1, 0.5, 1.0, 2.0, 3.0, 10.0] {
            let re = reactive_adulteration_equilibrium(&p, &c, 0.0, ShockRealization::new(q).unwrap()).unwrap();
            assert_eq!(re, pre);
        }
    }

    #[test]
    fn reference_market_comparative_statics() {
        let (p, c) = take_rate_market(20.0);
        match comparative_statics(&p, &c, 0.05).unwrap() {
            ComparativeStatics::Computed(r) => {
                assert!(r.violations.is_empty(), "{r:?}");
                assert!(r.d_n > 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            comparative_statics(&p, &c, 0.2).unwrap(),
            ComparativeStatics::NotApplicable { regime: Regime::ZeroAdulterant }
        ));
    }

    #[test]
    fn concavity_examples() {
        let (p, c) = take_rate_market(20.0);
        assert!(concavity_check(&p, &c, 0.1, &[0.5; 99]).unwrap());
        assert!(concavity_check(&p, &c, 0.1, &[0.0; 99]).unwrap());
        assert!(concavity_check(&p, &c, 0.1, &[1.0; 99]).unwrap());
        let g = MarketParams::calibrated_gamma(31);
        let p6 = MarketParams::new(31, g, 0.0074766, 3.0, 12.0, 0.05, 1.0).unwrap();
        let c6 = AdulterationCurve::new(1.0 / 15.0, 15.0).unwrap();
        assert!(concavity_check(&p6, &c6, 0.05, &[0.3; 30]).unwrap());
    }

    #[test]
    fn solve_market_consistent_with_model() {
        let (p, c) = take_rate_market(10.0);
        let quality = QualityVector::synthetic(100, 3).unwrap();
        let out = solve_market(&p, &c, &quality, 0.1, ShockRealization::EXPECTED).unwrap();
        let ep = model::ep_profit(&p, &c, &quality, out.dosage, 0.1).unwrap();
        assert_relative_eq!(out.ep_profit, ep, max_relative = 1e-12);
        let dosages = vec![out.dosage; 100];
        for i in [0, 37, 99] {
            let direct =
                model::seller_profit(&p, &c, &quality, i, &dosages, &out.prices, 0.1, ShockRealization::EXPECTED)
                    .unwrap();
            assert_relative_eq!(out.seller_profits[i], direct, max_relative = 1e-10);
        }
    }
}
