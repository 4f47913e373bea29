//! The platform's take-rate problem.
//!
//! With `H = h_max^(1/gamma) (1 - n rho)` the regime bounds are
//! `OPR1 = tau2 (1 - cap)`, `OPR2 = tau1 (1 - cap)`,
//! `OPR3 = tau2 (1 - cap / H)` and the dominance cut-off
//! `theta_tilde = (tau1/tau2 - 1) / (tau1/tau2 - 1/H)`.

use serde::Serialize;

use crate::equilibrium::{adulteration_thresholds, DosageKernel, Regime};
use crate::model::{self, MarketParams, QualityGain, QualityVector, BOUNDARY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TakeRateRegimeBounds {
    pub tau1: f64,
    pub tau2: f64,
    /// `h_max^(1/gamma) (1 - n rho)`, revenue multiplier of full adulteration.
    pub h_factor: f64,
    pub opr1: f64,
    pub opr2: f64,
    pub opr3: f64,
    pub theta_tilde: f64,
}

impl TakeRateRegimeBounds {
    /// True when the cap is at most `theta_tilde` (a platform without
    /// dominant pricing power).
    pub fn cap_limited(&self, cap: f64) -> bool {
        cap <= self.theta_tilde
    }

    /// Upper edge of the middle row of the decision table.
    pub fn middle_upper(&self, cap: f64) -> f64 {
        if self.cap_limited(cap) {
            self.opr2
        } else {
            self.opr3
        }
    }
}

pub fn regime_bounds(params: &MarketParams, curve: &impl QualityGain) -> Result<TakeRateRegimeBounds> {
    let th = adulteration_thresholds(params, curve)?;
    let cap = params.take_rate_cap;
    let h_factor = curve.h_max().powf(1.0 / params.gamma) * (1.0 - params.n_f64() * params.rho);
    let ratio = th.tau1 / th.tau2;
    Ok(TakeRateRegimeBounds {
        tau1: th.tau1,
        tau2: th.tau2,
        h_factor,
        opr1: th.tau2 * (1.0 - cap),
        opr2: th.tau1 * (1.0 - cap),
        opr3: th.tau2 * (1.0 - cap / h_factor),
        theta_tilde: (ratio - 1.0) / (ratio - 1.0 / h_factor),
    })
}

/// Shape of the platform's expected profit as a function of the take rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ProfitShape {
    Increasing,
    UnimodalUpDown,
    UpDownUp,
}

pub fn profit_shape(params: &MarketParams, curve: &impl QualityGain) -> Result<ProfitShape> {
    let b = regime_bounds(params, curve)?;
    let r = params.penalty_risk();
    Ok(if r <= b.opr1 + BOUNDARY_TOL {
        ProfitShape::Increasing
    } else if r < b.opr2 - BOUNDARY_TOL {
        ProfitShape::UnimodalUpDown
    } else {
        ProfitShape::UpDownUp
    })
}

/// Row of the decision table that produced the take rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TakeRateBranch {
    /// Low penalty risk: full cap, full adulteration.
    CapWithAdulteration,
    /// Moderate risk: the rate that holds sellers exactly at full adulteration.
    AdulterationBoundary,
    /// High risk: full cap, no adulteration.
    CapWithoutAdulteration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TakeRateDecision {
    pub take_rate: f64,
    pub dosage: f64,
    pub regime: Regime,
    pub ep_profit: f64,
    pub branch: TakeRateBranch,
    pub bounds: TakeRateRegimeBounds,
}

/// Platform expected profit at take rate `vartheta` with sellers at their
/// induced dosage equilibrium.
pub fn ep_profit_at(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    take_rate: f64,
) -> Result<f64> {
    let base = model::base_revenue(params, quality)?;
    let profit = InducedProfit::new(params, curve, base);
    params.check_take_rate(take_rate)?;
    profit.at(take_rate)
}

/// Cached evaluator of the induced platform profit for repeated calls.
pub(crate) struct InducedProfit<'a, C> {
    params: &'a MarketParams,
    curve: &'a C,
    kernel: DosageKernel,
    base: f64,
}

impl<'a, C: QualityGain> InducedProfit<'a, C> {
    pub fn new(params: &'a MarketParams, curve: &'a C, base: f64) -> Self {
        InducedProfit { params, curve, kernel: DosageKernel::from_params(params), base }
    }

    pub fn at(&self, take_rate: f64) -> Result<f64> {
        let x = self.kernel.solve(self.curve, take_rate)?.dosage;
        Ok(take_rate * self.base * model::adulteration_multiplier(self.params, self.curve, x))
    }
}

/// Closed-form optimal take rate.
///
/// Returns [`Error::OutsideRegime`] when the middle-row formula
/// `1 - r / tau2` is not positive, and [`Error::Consistency`] if the dosage
/// the table predicts differs from the solved equilibrium at that rate.
pub fn optimal_take_rate(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
) -> Result<TakeRateDecision> {
    let bounds = regime_bounds(params, curve)?;
    let cap = params.take_rate_cap;
    let r = params.penalty_risk();
    let (take_rate, dosage, branch) = if r <= bounds.opr1 + BOUNDARY_TOL {
        (cap, 1.0, TakeRateBranch::CapWithAdulteration)
    } else if r < bounds.middle_upper(cap) - BOUNDARY_TOL {
        let rate = 1.0 - r / bounds.tau2;
        if rate <= 0.0 {
            return Err(Error::OutsideRegime(format!(
                "boundary take rate 1 - r/tau2 = {rate} is not positive (r = {r}, tau2 = {})",
                bounds.tau2
            )));
        }
        (rate, 1.0, TakeRateBranch::AdulterationBoundary)
    } else {
        (cap, 0.0, TakeRateBranch::CapWithoutAdulteration)
    };

    let solved = DosageKernel::from_params(params).solve(curve, take_rate)?;
    if solved.dosage != dosage {
        return Err(Error::Consistency(format!(
            "decision table predicts dosage {dosage} at take rate {take_rate}, equilibrium gives {} ({})",
            solved.dosage, solved.regime
        )));
    }
    let ep_profit = model::ep_profit(params, curve, quality, dosage, take_rate)?;
    Ok(TakeRateDecision { take_rate, dosage, regime: solved.regime, ep_profit, branch, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::adulteration_equilibrium;
    use crate::model::AdulterationCurve;

    fn take_rate_market(t: f64) -> (MarketParams, AdulterationCurve) {
        (
            MarketParams::new(100, 99.9 / 99.0, 0.0029, 2.0, t, 0.9, 1.0).unwrap(),
            AdulterationCurve::new(0.1, 5.0).unwrap(),
        )
    }

    #[test]
    fn reference_market_shape_and_bounds() {
        let (p, c) = take_rate_market(20.0);
        let b = regime_bounds(&p, &c).unwrap();
        assert!((b.opr1 - 0.017_237).abs() < 1e-5);
        assert!((b.opr2 - 0.049_260).abs() < 1e-5);
        assert_eq!(profit_shape(&p, &c).unwrap(), ProfitShape::UpDownUp);
        let (p0, _) = take_rate_market(0.0);
        assert_eq!(profit_shape(&p0, &c).unwrap(), ProfitShape::Increasing);
    }

    #[test]
    fn reference_market_profit_is_increasing_without_revenue_motive() {
        // adulteration loses revenue at this point (H < 1), so raising the
        // take rate never hurts
        let (p, c) = take_rate_market(20.0);
        let quality = QualityVector::synthetic(100, 9).unwrap();
        let vals: Vec<f64> = (1..=90).map(|k| ep_profit_at(&p, &c, &quality, k as f64 / 100.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn boundary_rate_profit_and_known_gap() {
        let g = MarketParams::calibrated_gamma(100);
        let p = MarketParams::new(100, g, 0.0021, 2.0, 13.0, 0.3, 1.0).unwrap();
        let c = AdulterationCurve::new(0.05, 15.0).unwrap();
        let quality = QualityVector::synthetic(100, 9).unwrap();
        assert_eq!(profit_shape(&p, &c).unwrap(), ProfitShape::UnimodalUpDown);
        let d = optimal_take_rate(&p, &c, &quality).unwrap();
        assert_eq!(d.branch, TakeRateBranch::AdulterationBoundary);
        let k = model::base_revenue(&p, &quality).unwrap();
        let expected = d.take_rate * k * d.bounds.h_factor;
        assert!((d.ep_profit - expected).abs() <= 1e-12 * expected);
        // Past the boundary the dosage falls slowly enough that the larger
        // share outweighs the lost revenue, so the cap beats the boundary rate.
        let at_cap = ep_profit_at(&p, &c, &quality, 0.3).unwrap();
        assert!(at_cap > d.ep_profit);
    }

    #[test]
    fn middle_branch_sits_on_boundary() {
        let g = MarketParams::calibrated_gamma(100);
        let c = AdulterationCurve::new(0.05, 15.0).unwrap();
        let quality = QualityVector::synthetic(100, 2).unwrap();
        let mut seen = false;
        for k in 0..60 {
            let theta = 3.0 + 0.125 * k as f64;
            let p = MarketParams::new(100, g, 0.0021, theta, 5.0, 0.3, 1.0).unwrap();
            let Ok(d) = optimal_take_rate(&p, &c, &quality) else { continue };
            let eq = adulteration_equilibrium(&p, &c, d.take_rate).unwrap();
            assert_eq!(eq.dosage, d.dosage);
            if d.branch == TakeRateBranch::AdulterationBoundary {
                seen = true;
                let gap = p.penalty_risk() - d.bounds.tau2 * (1.0 - d.take_rate);
                assert!(gap.abs() < 1e-12, "{gap}");
            }
        }
        assert!(seen);
    }

    #[test]
    fn zero_inspection_takes_the_cap() {
        let (p, c) = take_rate_market(0.0);
        let quality = QualityVector::synthetic(100, 9).unwrap();
        let d = optimal_take_rate(&p, &c, &quality).unwrap();
        assert_eq!(d.take_rate, 0.9);
        assert_eq!(d.dosage, 1.0);
        assert_eq!(d.branch, TakeRateBranch::CapWithAdulteration);
    }
}
