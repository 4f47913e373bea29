//! Policy levers: an administrative penalty against platform cover-up,
//! platform-side penalty escalation, and traceability adoption.
//!
//! Throughout, `K = S* sum (alpha_i / V*)^(1/gamma)` is the sellers' total
//! revenue without adulteration ([`model::base_revenue`]) and
//! `H = h_max^(1/gamma) (1 - n rho)` the revenue multiplier of full
//! adulteration.

use serde::Serialize;

use crate::equilibrium::{adulteration_thresholds, DosageKernel, Regime};
use crate::model::{self, MarketParams, QualityGain, QualityVector, ShockRealization};
use crate::platform::{optimal_take_rate, regime_bounds, TakeRateDecision, TakeRateRegimeBounds};
use crate::{Error, Result};

/// Inspections split between the platform's own inspectors (`t_e`) and the
/// administration's (`t_a`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InspectionSplit {
    pub t_e: f64,
    pub t_a: f64,
}

impl InspectionSplit {
    pub fn new(t_e: f64, t_a: f64, params: &MarketParams) -> Result<Self> {
        if !(t_e.is_finite() && t_a.is_finite() && t_e >= 0.0 && t_a >= 0.0) {
            return Err(Error::domain(format!("inspection counts must be >= 0, got ({t_e}, {t_a})")));
        }
        if t_e + t_a > params.n_f64() {
            return Err(Error::domain(format!("t_e + t_a = {} exceeds n = {}", t_e + t_a, params.n)));
        }
        Ok(InspectionSplit { t_e, t_a })
    }

    pub fn total(&self) -> f64 {
        self.t_e + self.t_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceabilityCosts {
    /// Platform R&D expense.
    pub c_e: f64,
    /// Per-seller usage fee.
    pub c_s: f64,
}

impl TraceabilityCosts {
    pub fn new(c_e: f64, c_s: f64) -> Result<Self> {
        if !(c_e.is_finite() && c_s.is_finite() && c_e >= 0.0 && c_s >= 0.0) {
            return Err(Error::domain(format!("traceability costs must be >= 0, got ({c_e}, {c_s})")));
        }
        Ok(TraceabilityCosts { c_e, c_s })
    }
}

fn dosage_with_inspections(
    params: &MarketParams,
    curve: &impl QualityGain,
    take_rate: f64,
    t: f64,
) -> Result<(f64, Regime)> {
    let k = DosageKernel { t, ..DosageKernel::from_params(params) };
    let eq = k.solve(curve, take_rate)?;
    Ok((eq.dosage, eq.regime))
}

/// Dosages when the platform covers up (`x*(t_a)`) and when it reports
/// honestly (`x*(t_e + t_a)`).
fn split_dosages(
    params: &MarketParams,
    curve: &impl QualityGain,
    split: InspectionSplit,
    take_rate: f64,
) -> Result<((f64, Regime), (f64, Regime))> {
    params.check_take_rate(take_rate)?;
    adulteration_thresholds(params, curve)?;
    Ok((
        dosage_with_inspections(params, curve, take_rate, split.t_a)?,
        dosage_with_inspections(params, curve, take_rate, split.total())?,
    ))
}

/// Expected profit of a platform that hides what its own inspectors find:
/// `vartheta K g(x_a) - (t_e t_a / n) x_a^2 AP` with `x_a = x*(t_a)` and
/// `g(x) = h(x)^(1/gamma) (1 - n rho x)`.
pub fn unreliable_ep_profit(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    split: InspectionSplit,
    take_rate: f64,
    ap: f64,
) -> Result<f64> {
    let ((x_a, _), _) = split_dosages(params, curve, split, take_rate)?;
    let revenue =
        take_rate * model::base_revenue(params, quality)? * model::adulteration_multiplier(params, curve, x_a);
    Ok(revenue - split.t_e * split.t_a / params.n_f64() * x_a * x_a * ap)
}

/// Expected profit of an honest platform, with sellers facing all
/// `t_e + t_a` inspections.
pub fn reliable_ep_profit(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    split: InspectionSplit,
    take_rate: f64,
) -> Result<f64> {
    let (_, (x_e, _)) = split_dosages(params, curve, split, take_rate)?;
    Ok(take_rate * model::base_revenue(params, quality)? * model::adulteration_multiplier(params, curve, x_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value")]
pub enum ApRequirement {
    NotNecessary,
    Minimal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdminPenalty {
    /// Scenario 1..=6 of the cover-up classification.
    pub scenario: u8,
    pub requirement: ApRequirement,
    /// Lower and upper risk bounds `tau2 (1 - vartheta)`, `tau1 (1 - vartheta)`.
    pub opr_bar1: f64,
    pub opr_bar2: f64,
    pub dosage_cover_up: f64,
    pub dosage_honest: f64,
    /// Revenue gain from covering up, before any penalty.
    pub cover_up_gain: f64,
}

/// Map the pair of seller regimes (cover-up, honest) to scenarios 1..=6.
///
/// Scenario 1: both at full adulteration. 2/3: cover-up leaves full
/// adulteration while honest reporting gives an interior/zero dosage.
/// 4/5: cover-up interior, honest interior/zero. 6: no adulteration even
/// under cover-up.
fn scenario_of(cover_up: Regime, honest: Regime) -> u8 {
    use Regime::*;
    match (cover_up, honest) {
        (ZeroAdulterant, _) => 6,
        (MaxAdulterant, MaxAdulterant) => 1,
        (MaxAdulterant, Interior) => 2,
        (MaxAdulterant, ZeroAdulterant) => 3,
        (Interior, ZeroAdulterant) => 5,
        (Interior, _) => 4,
    }
}

/// Smallest administrative penalty that removes the cover-up motive.
///
/// Deterrence requires `unreliable(AP) <= reliable`, i.e.
/// `vartheta K (g(x_a) - g(x_e)) <= (t_e t_a / n) x_a^2 AP`, so
/// `AP = n dpi / (t_e t_a x_a^2)` with `dpi = vartheta K (g(x_a) - g(x_e))`,
/// floored at zero. In scenarios 1 and 6 the dosage is the same either way
/// (or zero) and no penalty is needed.
pub fn min_admin_penalty(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    split: InspectionSplit,
    take_rate: f64,
) -> Result<AdminPenalty> {
    let th = adulteration_thresholds(params, curve)?;
    let ((x_a, reg_a), (x_e, reg_e)) = split_dosages(params, curve, split, take_rate)?;
    let scenario = scenario_of(reg_a, reg_e);
    let base = model::base_revenue(params, quality)?;
    let g = |x| model::adulteration_multiplier(params, curve, x);
    let gain = take_rate * base * (g(x_a) - g(x_e));
    let requirement = match scenario {
        1 | 6 => ApRequirement::NotNecessary,
        _ if gain <= 0.0 => ApRequirement::Minimal(0.0),
        _ => {
            let detect = split.t_e * split.t_a * x_a * x_a;
            if detect == 0.0 {
                return Err(Error::Degenerate(format!(
                    "scenario {scenario}: detection probability is zero (t_e = {}, t_a = {}), no finite penalty deters",
                    split.t_e, split.t_a
                )));
            }
            ApRequirement::Minimal(params.n_f64() * gain / detect)
        }
    };
    Ok(AdminPenalty {
        scenario,
        requirement,
        opr_bar1: th.tau2 * (1.0 - take_rate),
        opr_bar2: th.tau1 * (1.0 - take_rate),
        dosage_cover_up: x_a,
        dosage_honest: x_e,
        cover_up_gain: gain,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "decision")]
pub enum Escalation {
    Escalate { target_theta: f64 },
    NoIncentive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscalationReport {
    pub decision: Escalation,
    /// `(tau2 / (t/n)) (1 - cap / H)`.
    pub theta_lower: f64,
    /// `OPR2 / (t/n)`.
    pub theta_upper: f64,
    pub cap_limited: bool,
    pub bounds: TakeRateRegimeBounds,
}

/// Whether the platform gains by promising a penalty above the legal
/// `theta`. Uses the params' take-rate cap.
pub fn escalation_incentive(params: &MarketParams, curve: &impl QualityGain) -> Result<EscalationReport> {
    if params.t <= 0.0 {
        return Err(Error::precondition("escalation needs t > 0"));
    }
    let bounds = regime_bounds(params, curve)?;
    let cap = params.take_rate_cap;
    let share = params.t / params.n_f64();
    let theta_lower = bounds.tau2 / share * (1.0 - cap / bounds.h_factor);
    let theta_upper = bounds.opr2 / share;
    let cap_limited = bounds.cap_limited(cap);
    let decision = if cap_limited && theta_lower < params.theta && params.theta < theta_upper {
        Escalation::Escalate { target_theta: theta_upper }
    } else {
        Escalation::NoIncentive
    };
    Ok(EscalationReport { decision, theta_lower, theta_upper, cap_limited, bounds })
}

/// Outcome on a platform whose traceability system removes adulteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceableOutcome {
    pub v_star: f64,
    pub prices: Vec<f64>,
    pub share: f64,
    pub seller_profits: Vec<f64>,
    pub ep_profit: f64,
    pub total_profit: f64,
}

/// Prices, seller profits (net of the usage fee) and platform profit (fees
/// collected minus R&D) on a traceable platform at take rate `vartheta`.
pub fn traceable_pricing(
    params: &MarketParams,
    quality: &QualityVector,
    q: ShockRealization,
    take_rate: f64,
    costs: TraceabilityCosts,
) -> Result<TraceableOutcome> {
    quality.check_len(params)?;
    params.check_take_rate(take_rate)?;
    let eq = crate::equilibrium::pricing_equilibrium(params, quality.alphas(), q)?;
    let revenues: Vec<f64> = eq.prices.iter().map(|p| p * eq.share).collect();
    let seller_profits = revenues.iter().map(|r| r * (1.0 - take_rate) - costs.c_s).collect();
    let total_revenue: f64 = revenues.iter().sum();
    let ep_profit = take_rate * total_revenue + params.n_f64() * costs.c_s - costs.c_e;
    Ok(TraceableOutcome {
        v_star: eq.v_star,
        prices: eq.prices,
        share: eq.share,
        seller_profits,
        ep_profit,
        total_profit: total_revenue - costs.c_e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceabilityVerdict {
    pub adds_value: bool,
    /// Largest R&D expense at which traceability still pays:
    /// `K (1 - H (1 - r))`.
    pub c_e_hat: f64,
    /// `1 - 1/H`.
    pub opr4: f64,
    /// `OPR2` if the cap is limited, `OPR3` otherwise.
    pub risk_upper: f64,
    pub penalty_risk: f64,
    pub cap_limited: bool,
    /// Set when the closed-form optimal take rate is undefined at this point;
    /// the verdict is then false.
    pub outside_closed_form: bool,
    pub bounds: TakeRateRegimeBounds,
}

/// Whether adopting traceability raises the sellers' and platform's total
/// expected profit.
pub fn traceability_verdict(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    c_e: f64,
) -> Result<TraceabilityVerdict> {
    if !(c_e.is_finite() && c_e >= 0.0) {
        return Err(Error::domain(format!("R&D expense must be >= 0, got {c_e}")));
    }
    let bounds = regime_bounds(params, curve)?;
    let opr4 = 1.0 - 1.0 / bounds.h_factor;
    if !(opr4 > 0.0 && opr4 < 1.0) {
        return Err(Error::precondition(format!(
            "OPR4 = {opr4} outside (0, 1); the full-adulteration gain assumption fails"
        )));
    }
    let r = params.penalty_risk();
    let k = model::base_revenue(params, quality)?;
    let c_e_hat = k * (1.0 - bounds.h_factor * (1.0 - r));
    let cap_limited = bounds.cap_limited(params.take_rate_cap);
    let risk_upper = bounds.middle_upper(params.take_rate_cap);
    let outside_closed_form = matches!(optimal_take_rate(params, curve, quality), Err(Error::OutsideRegime(_)));
    let adds_value = !outside_closed_form && c_e <= c_e_hat && opr4 < r && r < risk_upper;
    Ok(TraceabilityVerdict {
        adds_value,
        c_e_hat,
        opr4,
        risk_upper,
        penalty_risk: r,
        cap_limited,
        outside_closed_form,
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum FeeBand {
    Band {
        lower: f64,
        upper: f64,
        /// Upper bound for the lowest-quality seller; fees above it make
        /// that seller worse off even inside the band.
        upper_min_seller: f64,
        take_rate: f64,
    },
    Empty {
        lower: f64,
        upper: f64,
        reason: String,
    },
}

/// Usage-fee band `[C_s_check, C_s_hat]` inside which both sides gain.
///
/// With the optimal non-traceable take rate `vartheta*` (sellers at full
/// adulteration):
///
/// * platform: `vartheta* K + n C_s - C_e >= vartheta* K H`, so
///   `C_s >= vartheta* K (H - 1) / n + C_e / n`;
/// * seller with base revenue `k`: `k (1 - vartheta*) - C_s >= k H (1 - vartheta* - r)`,
///   so `C_s <= k ((1 - vartheta*) - H (1 - vartheta* - r))`.
///
/// The upper bound is evaluated at the mean seller, `k = K / n`, so the band
/// is nonempty exactly when `C_e <= C_e_hat`.
pub fn usage_fee_band(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    c_e: f64,
) -> Result<FeeBand> {
    let verdict = traceability_verdict(params, curve, quality, c_e)?;
    if !verdict.adds_value {
        return Err(Error::precondition("traceability adds no value at this point"));
    }
    let TakeRateDecision { take_rate, .. } = optimal_take_rate(params, curve, quality)?;
    let n = params.n_f64();
    let h = verdict.bounds.h_factor;
    let r = params.penalty_risk();
    let k = model::base_revenue(params, quality)?;
    let k_min = {
        let v_star = params.v_star()?;
        let alpha_min = quality.alphas().iter().copied().fold(f64::INFINITY, f64::min);
        params.equilibrium_share() * (alpha_min / v_star).powf(1.0 / params.gamma)
    };
    let seller_gap = (1.0 - take_rate) - h * (1.0 - take_rate - r);
    let lower = take_rate * k * (h - 1.0) / n + c_e / n;
    let upper = k / n * seller_gap;
    if lower > upper {
        return Ok(FeeBand::Empty { lower, upper, reason: format!("lower bound {lower} exceeds upper bound {upper}") });
    }
    Ok(FeeBand::Band { lower, upper, upper_min_seller: k_min * seller_gap, take_rate })
}

/// Combined output of the three levers, as reported by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PolicyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admin_penalty: Option<AdminPenalty>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalation: Option<EscalationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traceability: Option<TraceabilityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fee_band: Option<FeeBand>,
}
