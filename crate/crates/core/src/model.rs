//! Market primitives: exogenous parameters, the quality-gain curve, the
//! attraction (MCI) choice model, demand and profit functions.
//!
//! Notation in doc comments: `n` sellers, price sensitivity `gamma`, quality
//! consciousness `rho`, penalty intensity `theta`, `t` inspected sellers,
//! take rate `vartheta` capped at `take_rate_cap`, outside-option attraction
//! `v0`. The *overall penalty risk* is `theta * t / n`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for regime-boundary comparisons.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// All exogenous scalars of the game.
///
/// The constructor enforces the structural invariants (`n >= 2`,
/// `gamma > 1`, `0 < rho < 1/n`, `theta > 1`, `0 <= t <= n`,
/// `0 < take_rate_cap < 1`, `v0 > 0`). The modelling assumptions are
/// checked separately by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarketParams")]
pub struct MarketParams {
    pub n: usize,
    pub gamma: f64,
    pub rho: f64,
    pub theta: f64,
    pub t: f64,
    pub take_rate_cap: f64,
    pub v0: f64,
}

#[derive(Deserialize)]
struct RawMarketParams {
    n: usize,
    gamma: f64,
    rho: f64,
    theta: f64,
    t: f64,
    take_rate_cap: f64,
    #[serde(default = "default_v0")]
    v0: f64,
}

fn default_v0() -> f64 {
    1.0
}

impl TryFrom<RawMarketParams> for MarketParams {
    type Error = Error;

    fn try_from(r: RawMarketParams) -> Result<Self> {
        MarketParams::new(r.n, r.gamma, r.rho, r.theta, r.t, r.take_rate_cap, r.v0)
    }
}

impl MarketParams {
    pub fn new(n: usize, gamma: f64, rho: f64, theta: f64, t: f64, take_rate_cap: f64, v0: f64) -> Result<Self> {
        let p = MarketParams { n, gamma, rho, theta, t, take_rate_cap, v0 };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let finite =
            [self.gamma, self.rho, self.theta, self.t, self.take_rate_cap, self.v0].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("market parameters must be finite"));
        }
        if self.n < 2 {
            return Err(Error::domain(format!("need at least 2 sellers, got {}", self.n)));
        }
        if self.gamma <= 1.0 {
            return Err(Error::domain(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho * (self.n as f64) < 1.0) {
            return Err(Error::domain(format!("rho must lie in (0, 1/n), got {}", self.rho)));
        }
        if self.theta <= 1.0 {
            return Err(Error::domain(format!("theta must exceed 1, got {}", self.theta)));
        }
        if !(0.0..=self.n as f64).contains(&self.t) {
            return Err(Error::domain(format!("t must lie in [0, n], got {}", self.t)));
        }
        if !(self.take_rate_cap > 0.0 && self.take_rate_cap < 1.0) {
            return Err(Error::domain(format!("take-rate cap must lie in (0, 1), got {}", self.take_rate_cap)));
        }
        if self.v0 <= 0.0 {
            return Err(Error::domain(format!("v0 must be positive, got {}", self.v0)));
        }
        Ok(())
    }

    /// Price sensitivity used throughout the calibrated examples:
    /// `(n - 0.1) / (n - 1)`, which sits just inside the price-sensitivity bound.
    pub fn calibrated_gamma(n: usize) -> f64 {
        (n as f64 - 0.1) / (n as f64 - 1.0)
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }

    /// Overall penalty risk `theta * t / n`.
    pub fn penalty_risk(&self) -> f64 {
        self.theta * self.t / self.n_f64()
    }

    /// Common equilibrium market share `(gamma - 1) / gamma`.
    pub fn equilibrium_share(&self) -> f64 {
        (self.gamma - 1.0) / self.gamma
    }

    /// Price-sensitivity bound `n (gamma - 1) / gamma < 1`.
    pub fn price_sensitivity_ok(&self) -> bool {
        self.n_f64() * self.equilibrium_share() < 1.0
    }

    /// Equilibrium QPR level `V* = (gamma - 1) / (n - (n - 1) gamma) * v0`.
    pub fn v_star(&self) -> Result<f64> {
        let denom = self.n_f64() - (self.n_f64() - 1.0) * self.gamma;
        if denom <= 0.0 {
            return Err(Error::precondition(format!(
                "n - (n-1) gamma = {denom} <= 0: price-war regime (price-sensitivity bound fails)"
            )));
        }
        Ok((self.gamma - 1.0) / denom * self.v0)
    }

    pub fn with_theta(self, theta: f64) -> Result<Self> {
        Self { theta, ..self }.checked()
    }

    pub fn with_t(self, t: f64) -> Result<Self> {
        Self { t, ..self }.checked()
    }

    pub fn with_rho(self, rho: f64) -> Result<Self> {
        Self { rho, ..self }.checked()
    }

    pub fn with_take_rate_cap(self, take_rate_cap: f64) -> Result<Self> {
        Self { take_rate_cap, ..self }.checked()
    }

    fn checked(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    /// Accept a take rate in `[0, take_rate_cap]`.
    pub fn check_take_rate(&self, take_rate: f64) -> Result<()> {
        if !(take_rate >= 0.0 && take_rate <= self.take_rate_cap + BOUNDARY_TOL) {
            return Err(Error::domain(format!("take rate {take_rate} outside [0, {}]", self.take_rate_cap)));
        }
        Ok(())
    }
}

/// Quality improvement from adulteration, `h: [0,1] -> [1, h_max]`,
/// concavely increasing with `h(0) = 1`.
pub trait QualityGain: Send + Sync {
    fn h(&self, x: f64) -> f64;
    fn dh(&self, x: f64) -> f64;

    /// `h(1)`.
    fn h_max(&self) -> f64 {
        self.h(1.0)
    }
}

/// Quadratic gain `h(x) = a (b x - x^2) + 1` with `a > 0`, `b > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct AdulterationCurve {
    pub a: f64,
    pub b: f64,
}

#[derive(Deserialize)]
struct RawCurve {
    a: f64,
    b: f64,
}

impl TryFrom<RawCurve> for AdulterationCurve {
    type Error = Error;

    fn try_from(r: RawCurve) -> Result<Self> {
        AdulterationCurve::new(r.a, r.b)
    }
}

impl AdulterationCurve {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::domain(format!("curve coefficient a must be > 0, got {a}")));
        }
        if !(b.is_finite() && b > 2.0) {
            return Err(Error::domain(format!("curve coefficient b must be > 2, got {b}")));
        }
        Ok(AdulterationCurve { a, b })
    }
}

impl QualityGain for AdulterationCurve {
    fn h(&self, x: f64) -> f64 {
        self.a * (self.b * x - x * x) + 1.0
    }

    fn dh(&self, x: f64) -> f64 {
        self.a * (self.b - 2.0 * x)
    }

    fn h_max(&self) -> f64 {
        self.a * (self.b - 1.0) + 1.0
    }
}

/// Original quality levels, sorted non-increasing, all positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QualityVector(Vec<f64>);

impl QualityVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::domain("quality vector is empty"));
        }
        if let Some(bad) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::domain(format!("quality levels must be positive, got {bad}")));
        }
        if alphas.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::domain("quality levels must be sorted in non-increasing order"));
        }
        Ok(QualityVector(alphas))
    }

    /// Deterministic synthetic qualities in `[1, 10)`, sorted descending.
    pub fn synthetic(count: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut alphas: Vec<f64> = (0..count).map(|_| rng.random_range(1.0..10.0)).collect();
        alphas.sort_by(|a, b| b.total_cmp(a));
        Self::new(alphas)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_len(&self, params: &MarketParams) -> Result<()> {
        if self.len() != params.n {
            return Err(Error::domain(format!("quality vector has {} entries but n = {}", self.len(), params.n)));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for QualityVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        QualityVector::new(v)
    }
}

impl From<QualityVector> for Vec<f64> {
    fn from(q: QualityVector) -> Self {
        q.0
    }
}

/// Realised multiplicative quality shock. Preemptive-stage expectations use
/// `q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockRealization(f64);

impl ShockRealization {
    pub const EXPECTED: ShockRealization = ShockRealization(1.0);

    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::domain(format!("shock realisation must be positive, got {q}")));
        }
        Ok(ShockRealization(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ShockRealization {
    fn default() -> Self {
        Self::EXPECTED
    }
}

/// Pass/fail per modelling assumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `n (gamma-1)/gamma < 1`.
    pub price_sensitivity: bool,
    /// `h_max^(1/gamma) > 1 / (1 - n rho)`.
    pub adulteration_gain: bool,
    /// Revenue motive `h'/(gamma h) > n rho / (1 - n rho x)` at `x = 1`.
    pub revenue_motive_endpoint: bool,
    /// Revenue motive on a 1001-point grid over `[0, 1]`.
    pub revenue_motive_grid: bool,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.price_sensitivity && self.adulteration_gain && self.revenue_motive_endpoint && self.revenue_motive_grid
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.price_sensitivity {
            out.push("price sensitivity: consumers too price-sensitive (price war)");
        }
        if !self.adulteration_gain {
            out.push("adulteration gain: maximal adulteration gain too small");
        }
        if !self.revenue_motive_endpoint {
            out.push("revenue motive at x=1: adulteration does not raise revenue");
        }
        if !self.revenue_motive_grid {
            out.push("revenue motive on grid: adulteration does not raise revenue");
        }
        out
    }

    pub fn require_all(&self) -> Result<()> {
        if self.all_pass() {
            Ok(())
        } else {
            Err(Error::precondition(self.failures().join("; ")))
        }
    }
}

fn revenue_motive_at(params: &MarketParams, curve: &impl QualityGain, x: f64) -> bool {
    let n_rho = params.n_f64() * params.rho;
    curve.dh(x) / (params.gamma * curve.h(x)) > n_rho / (1.0 - n_rho * x)
}

/// Check every modelling assumption.
pub fn validate(params: &MarketParams, curve: &impl QualityGain) -> ValidationReport {
    let n_rho = params.n_f64() * params.rho;
    ValidationReport {
        price_sensitivity: params.price_sensitivity_ok(),
        adulteration_gain: curve.h_max().powf(1.0 / params.gamma) > 1.0 / (1.0 - n_rho),
        revenue_motive_endpoint: revenue_motive_at(params, curve, 1.0),
        revenue_motive_grid: (0..=1000).all(|k| revenue_motive_at(params, curve, k as f64 / 1000.0)),
    }
}

/// Attraction-model choice probabilities `S_i = q V_i / (v0 + q sum V_j)`.
pub fn choice_probabilities(params: &MarketParams, qprs: &[f64], q: ShockRealization) -> Result<Vec<f64>> {
    if let Some(bad) = qprs.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::domain(format!("QPR values must be positive, got {bad}")));
    }
    let q = q.value();
    let denom = params.v0 + q * qprs.iter().sum::<f64>();
    Ok(qprs.iter().map(|v| q * v / denom).collect())
}

/// Probability mass left on the outside option.
pub fn outside_share(params: &MarketParams, qprs: &[f64], q: ShockRealization) -> Result<f64> {
    let shares = choice_probabilities(params, qprs, q)?;
    Ok(1.0 - shares.iter().sum::<f64>())
}

fn check_dosage(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("dosage {x} outside [0, 1]")));
    }
    Ok(())
}

/// Platform-wide demand `1 - rho * sum x_i`.
pub fn total_demand(params: &MarketParams, dosages: &[f64]) -> Result<f64> {
    for &x in dosages {
        check_dosage(x)?;
    }
    Ok(1.0 - params.rho * dosages.iter().sum::<f64>())
}

/// Seller `i`'s expected profit given every seller's dosage and price:
/// `p_i * S_i * D * (1 - vartheta - theta (t/n) x_i)` with
/// `V_j = alpha_j h(x_j) / p_j^gamma`.
#[allow(clippy::too_many_arguments)]
pub fn seller_profit(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    i: usize,
    dosages: &[f64],
    prices: &[f64],
    take_rate: f64,
    q: ShockRealization,
) -> Result<f64> {
    let n = quality.len();
    if dosages.len() != n || prices.len() != n {
        return Err(Error::domain("dosage, price and quality vectors must have equal length"));
    }
    if i >= n {
        return Err(Error::domain(format!("seller index {i} out of range")));
    }
    if let Some(bad) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::domain(format!("prices must be positive, got {bad}")));
    }
    if !take_rate.is_finite() {
        return Err(Error::domain("take rate must be finite"));
    }
    let demand = total_demand(params, dosages)?;
    let qprs: Vec<f64> =
        (0..n).map(|j| quality.alphas()[j] * curve.h(dosages[j]) / prices[j].powf(params.gamma)).collect();
    let shares = choice_probabilities(params, &qprs, q)?;
    let margin = 1.0 - take_rate - params.penalty_risk() * dosages[i];
    Ok(prices[i] * shares[i] * demand * margin)
}

/// Sellers' total expected sales revenue with no adulteration,
/// `S* * sum (alpha_i / V*)^(1/gamma)`.
pub fn base_revenue(params: &MarketParams, quality: &QualityVector) -> Result<f64> {
    quality.check_len(params)?;
    let v_star = params.v_star()?;
    let inv_gamma = 1.0 / params.gamma;
    Ok(params.equilibrium_share() * quality.alphas().iter().map(|a| (a / v_star).powf(inv_gamma)).sum::<f64>())
}

/// Revenue multiplier of a symmetric dosage, `h(x)^(1/gamma) (1 - n rho x)`.
pub fn adulteration_multiplier(params: &MarketParams, curve: &impl QualityGain, x: f64) -> f64 {
    curve.h(x).powf(1.0 / params.gamma) * (1.0 - params.n_f64() * params.rho * x)
}

/// Platform expected profit
/// `vartheta * S* * sum (alpha_i h(x)/V*)^(1/gamma) * (1 - n rho x)`.
pub fn ep_profit(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    dosage: f64,
    take_rate: f64,
) -> Result<f64> {
    check_dosage(dosage)?;
    params.check_take_rate(take_rate)?;
    Ok(take_rate * base_revenue(params, quality)? * adulteration_multiplier(params, curve, dosage))
}
