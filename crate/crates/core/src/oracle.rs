//! Brute-force oracles for the closed forms.
//!
//! Every oracle is deterministic for a fixed [`OracleConfig`]; parallel runs
//! produce the same numbers as sequential ones because work is split into
//! index-ordered chunks and reduced afterwards.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibrium::{adulteration_thresholds, pricing_equilibrium, solve_market};
use crate::exec::Execution;
use crate::model::{self, AdulterationCurve, MarketParams, QualityGain, QualityVector, ShockRealization};
use crate::numeric::{golden_max, logspace};
use crate::platform::{optimal_take_rate, profit_shape, InducedProfit, ProfitShape};
use crate::{Error, Result};

/// Identifier of the random stream layout, echoed in reports.
pub const RNG_ALGORITHM: &str = "ChaCha8/stream-per-batch/v1";
/// Draws per independent RNG stream in [`simulate_choices`].
pub const MC_BATCH: usize = 10_000;
/// Largest accepted distance between a grid best response and the candidate.
pub const DOSAGE_TOLERANCE: f64 = 2e-3;
/// Take-rate grid step before golden-section refinement.
pub const TAKE_RATE_GRID_STEP: f64 = 1e-3;
const TAKE_RATE_REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub price_grid_points: usize,
    pub dosage_grid_points: usize,
    pub mc_draws: usize,
    pub rng_seed: u64,
    pub tolerance_rel: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            price_grid_points: 200,
            dosage_grid_points: 2001,
            mc_draws: 100_000,
            rng_seed: 20_211_201,
            tolerance_rel: 1e-6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.price_grid_points < 2 || self.dosage_grid_points < 2 || self.mc_draws < 2 {
            return Err(Error::domain("oracle grid sizes and draw counts must be at least 2"));
        }
        if !(self.tolerance_rel > 0.0 && self.tolerance_rel.is_finite()) {
            return Err(Error::domain("oracle tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingNashReport {
    /// Largest relative profit gain from a unilateral price deviation, per seller.
    pub gains: Vec<f64>,
    pub max_gain: f64,
    pub worst_seller: usize,
    pub passed: bool,
}

/// Scan each seller's price over a log grid on `[p/4, 4p]` with the others
/// held at `prices`, and report the best relative improvement.
pub fn verify_pricing_nash(
    params: &MarketParams,
    nominal_qualities: &[f64],
    prices: &[f64],
    q: ShockRealization,
    cfg: &OracleConfig,
    exec: Execution,
) -> Result<PricingNashReport> {
    cfg.validate()?;
    let n = nominal_qualities.len();
    if prices.len() != n {
        return Err(Error::domain("price and quality vectors differ in length"));
    }
    let qpr = |i: usize, p: f64| nominal_qualities[i] / p.powf(params.gamma);
    let base_qprs: Vec<f64> = (0..n).map(|i| qpr(i, prices[i])).collect();
    let total: f64 = base_qprs.iter().sum();
    let gains: Vec<f64> = exec.map_range(0..n, |i| {
        // demand and margin factors are common to all prices and cancel
        let revenue = |p: f64| {
            let v = qpr(i, p);
            let others = total - base_qprs[i];
            let shares = model::choice_probabilities(params, &[v, others], q);
            shares.map(|s| p * s[0]).unwrap_or(f64::NAN)
        };
        let at_eq = revenue(prices[i]);
        logspace(prices[i] / 4.0, prices[i] * 4.0, cfg.price_grid_points)
            .into_iter()
            .map(|p| (revenue(p) - at_eq) / at_eq.abs())
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let (worst_seller, max_gain) = argmax(&gains);
    Ok(PricingNashReport { passed: max_gain <= cfg.tolerance_rel, gains, max_gain, worst_seller })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosageNashReport {
    pub candidate: f64,
    pub best_responses: Vec<f64>,
    pub max_deviation: f64,
    pub worst_seller: usize,
    pub passed: bool,
}

/// Grid best response of every seller to the others playing `candidate`,
/// with all sellers repricing per the pricing game after dosages are set.
#[allow(clippy::too_many_arguments)]
pub fn verify_dosage_nash(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    take_rate: f64,
    candidate: f64,
    q: ShockRealization,
    cfg: &OracleConfig,
    exec: Execution,
) -> Result<DosageNashReport> {
    cfg.validate()?;
    quality.check_len(params)?;
    if !(0.0..=1.0).contains(&candidate) {
        return Err(Error::domain(format!("candidate dosage {candidate} outside [0, 1]")));
    }
    let n = params.n;
    let grid = crate::numeric::linspace(0.0, 1.0, cfg.dosage_grid_points);
    let profit = |i: usize, own: f64| -> Result<f64> {
        let mut dosages = vec![candidate; n];
        dosages[i] = own;
        let nominal: Vec<f64> = quality.alphas().iter().zip(&dosages).map(|(a, x)| a * curve.h(*x)).collect();
        let prices = pricing_equilibrium(params, &nominal, q)?.prices;
        model::seller_profit(params, curve, quality, i, &dosages, &prices, take_rate, q)
    };
    let mut best_responses = Vec::with_capacity(n);
    for i in 0..n {
        let values = exec.map_slice(&grid, |&x| profit(i, x));
        let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
        let (k, _) = argmax(&values);
        best_responses.push(grid[k]);
    }
    let deviations: Vec<f64> = best_responses.iter().map(|b| (b - candidate).abs()).collect();
    let (worst_seller, max_deviation) = argmax(&deviations);
    Ok(DosageNashReport {
        candidate,
        passed: max_deviation <= DOSAGE_TOLERANCE,
        best_responses,
        max_deviation,
        worst_seller,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceSimulation {
    /// Index 0 is the outside option, index `i` seller `i`.
    pub shares: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    pub algorithm: &'static str,
}

impl ChoiceSimulation {
    /// Count how many shares fall outside `k` standard errors of `expected`,
    /// using the binomial standard error of the expected probability.
    pub fn band_violations(&self, expected: &[f64], k: f64) -> usize {
        self.shares
            .iter()
            .zip(expected)
            .filter(|(s, p)| {
                let sigma = (*p * (1.0 - *p) / self.draws as f64).sqrt();
                (*s - *p).abs() > k * sigma
            })
            .count()
    }
}

/// Simulate consumer choices with unit-shape Frechet taste shocks
/// `xi = -1 / ln(u)`; each consumer picks the largest `V_j xi_j` (outside
/// option `v0`, sellers `q V_i`).
pub fn simulate_choices(
    params: &MarketParams,
    qprs: &[f64],
    q: ShockRealization,
    cfg: &OracleConfig,
    exec: Execution,
) -> Result<ChoiceSimulation> {
    cfg.validate()?;
    model::choice_probabilities(params, qprs, q)?;
    let attractions: Vec<f64> = std::iter::once(params.v0).chain(qprs.iter().map(|v| q.value() * v)).collect();
    let batches = cfg.mc_draws.div_ceil(MC_BATCH);
    let counts = exec.map_range(0..batches, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(b as u64);
        let draws = MC_BATCH.min(cfg.mc_draws - b * MC_BATCH);
        let mut counts = vec![0u64; attractions.len()];
        for _ in 0..draws {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, a) in attractions.iter().enumerate() {
                let u: f64 = rng.sample(Open01);
                let utility = a * (-1.0 / u.ln());
                if utility > best.1 {
                    best = (j, utility);
                }
            }
            counts[best.0] += 1;
        }
        counts
    });
    let mut totals = vec![0u64; attractions.len()];
    for c in counts {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n = cfg.mc_draws as f64;
    let shares: Vec<f64> = totals.iter().map(|c| *c as f64 / n).collect();
    let std_errors = shares.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(ChoiceSimulation { shares, std_errors, draws: cfg.mc_draws, seed: cfg.rng_seed, algorithm: RNG_ALGORITHM })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TakeRateSearch {
    pub take_rate: f64,
    pub ep_profit: f64,
    pub grid_take_rate: f64,
    pub grid_profit: f64,
}

fn take_rate_grid(cap: f64) -> Vec<f64> {
    let steps = (cap / TAKE_RATE_GRID_STEP + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (1..=steps).map(|k| k as f64 * TAKE_RATE_GRID_STEP).collect();
    if grid.last().is_none_or(|last| cap - last > 1e-12) {
        grid.push(cap);
    }
    grid
}

/// Maximise platform profit over `(0, cap]` on a `1e-3` grid, then refine
/// around the best grid point by golden-section search to `1e-6`.
pub fn grid_search_take_rate(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    exec: Execution,
) -> Result<TakeRateSearch> {
    adulteration_thresholds(params, curve)?;
    let base = model::base_revenue(params, quality)?;
    let profit = InducedProfit::new(params, curve, base);
    let grid = take_rate_grid(params.take_rate_cap);
    let values = exec.map_slice(&grid, |&v| profit.at(v)).into_iter().collect::<Result<Vec<f64>>>()?;
    let (k, grid_profit) = argmax(&values);
    let lo = if k == 0 { f64::MIN_POSITIVE } else { grid[k - 1] };
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let (x, fx) = golden_max(|v| profit.at(v).unwrap_or(f64::NEG_INFINITY), lo, hi, TAKE_RATE_REFINE_TOL);
    let (take_rate, ep_profit) = if fx > grid_profit { (x, fx) } else { (grid[k], grid_profit) };
    Ok(TakeRateSearch { take_rate, ep_profit, grid_take_rate: grid[k], grid_profit })
}

/// Pattern of monotone pieces of platform profit over a take-rate grid, e.g.
/// `"UD"` for up then down. Differences below `1e-13` relative are ignored.
pub fn empirical_profit_pattern(params: &MarketParams, curve: &impl QualityGain, points: usize) -> Result<String> {
    let profit = InducedProfit::new(params, curve, 1.0);
    let grid = crate::numeric::linspace(TAKE_RATE_GRID_STEP, params.take_rate_cap, points);
    let values = grid.iter().map(|&v| profit.at(v)).collect::<Result<Vec<f64>>>()?;
    let mut pattern = String::new();
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= 1e-13 * w[1].abs() {
            continue;
        }
        let c = if d > 0.0 { 'U' } else { 'D' };
        if !pattern.ends_with(c) {
            pattern.push(c);
        }
    }
    Ok(pattern)
}

/// Whether an observed piece pattern is compatible with a shape once pieces
/// too short to show on the grid are allowed to vanish.
pub fn pattern_matches_shape(pattern: &str, shape: ProfitShape) -> bool {
    let allowed: &[&str] = match shape {
        ProfitShape::Increasing => &["U"],
        ProfitShape::UnimodalUpDown => &["UD", "U", "D"],
        ProfitShape::UpDownUp => &["UDU", "UD", "DU", "U", "D"],
    };
    allowed.contains(&pattern)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TakeRateCheck {
    pub closed_form: Option<f64>,
    pub closed_form_profit: Option<f64>,
    pub search: TakeRateSearch,
    pub relative_gap: Option<f64>,
    pub shape: ProfitShape,
    pub empirical_pattern: String,
    pub shape_matches: bool,
    /// `None` when the closed form is undefined at this point.
    pub passed: Option<bool>,
    pub note: Option<String>,
}

/// Compare the closed-form take rate and profit shape with the grid oracle.
pub fn check_take_rate(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    cfg: &OracleConfig,
    exec: Execution,
) -> Result<TakeRateCheck> {
    let search = grid_search_take_rate(params, curve, quality, exec)?;
    let shape = profit_shape(params, curve)?;
    let empirical_pattern = empirical_profit_pattern(params, curve, 2000)?;
    let shape_matches = pattern_matches_shape(&empirical_pattern, shape);
    let (closed_form, closed_form_profit, relative_gap, passed, note) = match optimal_take_rate(params, curve, quality)
    {
        Ok(d) => {
            let gap = (search.ep_profit - d.ep_profit) / search.ep_profit.abs();
            (Some(d.take_rate), Some(d.ep_profit), Some(gap), Some(gap <= cfg.tolerance_rel && shape_matches), None)
        }
        Err(Error::OutsideRegime(msg)) => (None, None, None, None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(TakeRateCheck {
        closed_form,
        closed_form_profit,
        search,
        relative_gap,
        shape,
        empirical_pattern,
        shape_matches,
        passed,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceCheck {
    pub expected: Vec<f64>,
    pub simulation: ChoiceSimulation,
    pub violations_3sigma: usize,
    pub passed: bool,
}

/// Allowed count of 3-sigma band violations among `categories` shares.
pub fn allowed_band_violations(categories: usize) -> usize {
    (0.02 * categories as f64).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub pricing: PricingNashReport,
    pub dosage: DosageNashReport,
    pub choice: ChoiceCheck,
    pub take_rate: TakeRateCheck,
    pub rng_algorithm: &'static str,
    pub passed: bool,
}

/// Run all four oracles at one parameter point. `candidate_dosage` replaces
/// the solved dosage in the dosage oracle when given (fault injection).
pub fn verify_point(
    params: &MarketParams,
    curve: &impl QualityGain,
    quality: &QualityVector,
    take_rate: f64,
    candidate_dosage: Option<f64>,
    cfg: &OracleConfig,
    exec: Execution,
) -> Result<OracleReport> {
    let q = ShockRealization::EXPECTED;
    let outcome = solve_market(params, curve, quality, take_rate, q)?;
    let nominal: Vec<f64> = quality.alphas().iter().map(|a| a * curve.h(outcome.dosage)).collect();
    let pricing = verify_pricing_nash(params, &nominal, &outcome.prices, q, cfg, exec)?;
    let candidate = candidate_dosage.unwrap_or(outcome.dosage);
    let dosage = verify_dosage_nash(params, curve, quality, take_rate, candidate, q, cfg, exec)?;

    let qprs: Vec<f64> = nominal.iter().zip(&outcome.prices).map(|(a, p)| a / p.powf(params.gamma)).collect();
    let sellers = model::choice_probabilities(params, &qprs, q)?;
    let expected: Vec<f64> = std::iter::once(1.0 - sellers.iter().sum::<f64>()).chain(sellers).collect();
    let simulation = simulate_choices(params, &qprs, q, cfg, exec)?;
    let violations_3sigma = simulation.band_violations(&expected, 3.0);
    let choice = ChoiceCheck {
        passed: violations_3sigma <= allowed_band_violations(expected.len()),
        expected,
        simulation,
        violations_3sigma,
    };
    let take_rate_check = check_take_rate(params, curve, quality, cfg, exec)?;
    let passed = pricing.passed && dosage.passed && choice.passed && take_rate_check.passed.unwrap_or(true);
    Ok(OracleReport { pricing, dosage, choice, take_rate: take_rate_check, rng_algorithm: RNG_ALGORITHM, passed })
}

/// A randomly drawn parameter point satisfying every modelling assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomInstance {
    pub params: MarketParams,
    pub curve: AdulterationCurve,
    pub quality: QualityVector,
    pub take_rate: f64,
}

/// Draw an assumption-satisfying instance with `2 <= n <= max_n`.
///
/// `gamma` lies strictly inside the no-price-war range, `rho` strictly below
/// both the gain and the revenue-motive bounds, `t` anywhere in `[0, n]`.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize) -> RandomInstance {
    let max_n = max_n.max(2);
    loop {
        let n = rng.random_range(2..=max_n);
        let nf = n as f64;
        let gamma = 1.0 + (nf / (nf - 1.0) - 1.0) * rng.random_range(0.05..0.95);
        let a = rng.random_range(0.02..0.5);
        let b = rng.random_range(2.1..20.0);
        let curve = AdulterationCurve { a, b };
        let h_max = curve.h_max();
        let bound =
            f64::min((1.0 - h_max.powf(-1.0 / gamma)) / nf, a * (b - 2.0) / (gamma * h_max + a * (b - 2.0)) / nf);
        if bound <= 0.0 {
            continue;
        }
        let rho = bound * rng.random_range(0.05..0.95);
        let theta = rng.random_range(1.01..10.0);
        let t = rng.random_range(0.0..=nf);
        let cap = rng.random_range(0.05..0.95);
        let Ok(params) = MarketParams::new(n, gamma, rho, theta, t, cap, 1.0) else { continue };
        if !model::validate(&params, &curve).all_pass() || adulteration_thresholds(&params, &curve).is_err() {
            continue;
        }
        let mut alphas: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        alphas.sort_by(|x, y| y.total_cmp(x));
        let Ok(quality) = QualityVector::new(alphas) else { continue };
        let take_rate = rng.random_range(0.0..=cap);
        return RandomInstance { params, curve, quality, take_rate };
    }
}

/// `count` instances from a seeded generator.
pub fn random_instances(seed: u64, count: usize, max_n: usize) -> Vec<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng, max_n)).collect()
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_seller() -> MarketParams {
        MarketParams::new(2, 1.5, 0.1, 2.0, 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn pricing_oracle_accepts_equilibrium_and_rejects_perturbation() {
        let p = two_seller();
        let cfg = OracleConfig::default();
        let eq = pricing_equilibrium(&p, &[4.0, 2.0], ShockRealization::EXPECTED).unwrap();
        let ok =
            verify_pricing_nash(&p, &[4.0, 2.0], &eq.prices, ShockRealization::EXPECTED, &cfg, Execution::Sequential)
                .unwrap();
        assert!(ok.passed, "{ok:?}");
        let bumped: Vec<f64> = eq.prices.iter().map(|x| x * 1.1).collect();
        let bad =
            verify_pricing_nash(&p, &[4.0, 2.0], &bumped, ShockRealization::EXPECTED, &cfg, Execution::Sequential)
                .unwrap();
        assert!(!bad.passed && bad.max_gain > 0.0);
    }

    #[test]
    fn simulation_is_deterministic_and_parallel_safe() {
        let p = MarketParams::new(3, 1.2, 0.1, 2.0, 1.0, 0.5, 1.0).unwrap();
        let cfg = OracleConfig { mc_draws: 30_000, ..OracleConfig::default() };
        let a =
            simulate_choices(&p, &[0.5, 0.25, 0.25], ShockRealization::EXPECTED, &cfg, Execution::Sequential).unwrap();
        let b =
            simulate_choices(&p, &[0.5, 0.25, 0.25], ShockRealization::EXPECTED, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.band_violations(&[0.5, 0.25, 0.125, 0.125], 4.0), 0);
    }

    #[test]
    fn take_rate_grid_ends_at_cap() {
        let g = take_rate_grid(0.9);
        assert_eq!(g.len(), 900);
        assert_eq!(*g.last().unwrap(), 0.9);
        let g = take_rate_grid(0.0505);
        assert_eq!(g.len(), 51);
        assert_eq!(*g.last().unwrap(), 0.0505);
    }

    #[test]
    fn shape_patterns() {
        assert!(pattern_matches_shape("U", ProfitShape::Increasing));
        assert!(!pattern_matches_shape("UD", ProfitShape::Increasing));
        assert!(pattern_matches_shape("DU", ProfitShape::UpDownUp));
        assert!(!pattern_matches_shape("DU", ProfitShape::UnimodalUpDown));
    }

    #[test]
    fn random_instances_are_valid_and_reproducible() {
        let a = random_instances(5, 20, 5);
        assert_eq!(a, random_instances(5, 20, 5));
        for inst in &a {
            assert!(model::validate(&inst.params, &inst.curve).all_pass());
            assert!(inst.params.n <= 5);
        }
    }
}
