//! Calibration from seller price/volume data.
//!
//! Input is CSV with header `seller_id,price,volume`, one row per product
//! variant. A seller's price is the plain mean over its variants and its
//! volume the sum. Sellers with volume strictly above the threshold form the
//! market; everything else is the outside option.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::model::{self, AdulterationCurve, MarketParams, QualityGain, QualityVector};
use crate::numeric::{mean, sample_sd};
use crate::{Error, Result};

pub const DEFAULT_VOLUME_THRESHOLD: u64 = 10;
const MAX_RHO_HALVINGS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SellerRecord {
    pub seller_id: String,
    pub prices: Vec<f64>,
    pub monthly_volume: u64,
}

impl SellerRecord {
    pub fn mean_price(&self) -> f64 {
        mean(&self.prices)
    }
}

const HEADER: [&str; 3] = ["seller_id", "price", "volume"];

/// Parse seller rows. Rows of the same seller are merged in order of first
/// appearance.
pub fn ingest<R: Read>(reader: R) -> Result<Vec<SellerRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header_err = |e: csv::Error| Error::Parse { line: 1, message: e.to_string() };
    let headers = rdr.headers().map_err(header_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse { line: 1, message: "empty input".into() });
    }
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, got `{}`",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records: Vec<SellerRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(bad("empty seller_id".into()));
        }
        let price: f64 = row[1].parse().map_err(|_| bad(format!("invalid price `{}`", &row[1])))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(bad(format!("price must be positive, got {price}")));
        }
        let volume: u64 =
            row[2].parse().map_err(|_| bad(format!("volume must be a non-negative integer, got `{}`", &row[2])))?;
        match index.get(&id) {
            Some(&k) => {
                records[k].prices.push(price);
                records[k].monthly_volume += volume;
            }
            None => {
                index.insert(id.clone(), records.len());
                records.push(SellerRecord { seller_id: id, prices: vec![price], monthly_volume: volume });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Parse { line: 1, message: "no seller rows".into() });
    }
    Ok(records)
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<Vec<SellerRecord>> {
    ingest(std::fs::File::open(path)?)
}

fn active(records: &[SellerRecord], threshold: u64) -> Vec<&SellerRecord> {
    records.iter().filter(|r| r.monthly_volume > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvStatistics {
    pub cv_prices: f64,
    pub cv_shares: f64,
    pub n_active: usize,
}

/// Coefficients of variation (sample SD over mean) of the active sellers'
/// mean prices and of their shares of active volume.
pub fn cv_statistics(records: &[SellerRecord], volume_threshold: u64) -> Result<CvStatistics> {
    let act = active(records, volume_threshold);
    if act.len() < 2 {
        return Err(Error::precondition(format!(
            "need at least 2 sellers with volume > {volume_threshold}, found {}",
            act.len()
        )));
    }
    let prices: Vec<f64> = act.iter().map(|r| r.mean_price()).collect();
    let total: u64 = act.iter().map(|r| r.monthly_volume).sum();
    let shares: Vec<f64> = act.iter().map(|r| r.monthly_volume as f64 / total as f64).collect();
    let cv = |xs: &[f64]| {
        let m = mean(xs);
        if m == 0.0 {
            Err(Error::Degenerate("zero mean in coefficient of variation".into()))
        } else {
            Ok(sample_sd(xs) / m)
        }
    };
    Ok(CvStatistics { cv_prices: cv(&prices)?, cv_shares: cv(&shares)?, n_active: act.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationOptions {
    pub volume_threshold: u64,
    pub curve: AdulterationCurve,
    pub theta: f64,
    pub t: f64,
    pub take_rate_cap: f64,
    /// Use this `rho` instead of deriving it from the curve.
    pub rho: Option<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            volume_threshold: DEFAULT_VOLUME_THRESHOLD,
            curve: AdulterationCurve { a: 1.0 / 15.0, b: 15.0 },
            theta: 3.0,
            t: 12.0,
            take_rate_cap: 0.05,
            rho: None,
        }
    }
}

/// Factor turning a price into a quality level, `S* / (1 - n S*)` with
/// `S* = (gamma-1)/gamma`. It equals `V*` at `v0 = 1`, so the inferred
/// qualities reproduce the observed prices in the pricing game.
pub fn quality_constant(n: usize, gamma: f64) -> f64 {
    let s = (gamma - 1.0) / gamma;
    s / (1.0 - n as f64 * s)
}

/// [`quality_constant`] at `gamma = (n - 0.1)/(n - 1)`, where it reduces to
/// `9 / (n - 1)`. Evaluating the reduced form keeps it exact in floating
/// point (`0.3` at `n = 31`).
pub fn calibrated_quality_constant(n: usize) -> f64 {
    9.0 / (n as f64 - 1.0)
}

/// Outcome of the `rho` derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedRho {
    pub rho: f64,
    /// Value before any halving.
    pub initial: f64,
    pub halvings: u32,
}

/// `rho = 0.8 min{(1 - h_max^(-1/gamma))/n, a(b-2)/(gamma h_max + a b)/n}`,
/// halved until the gain and revenue-motive assumptions both hold.
pub fn derive_rho(n: usize, gamma: f64, curve: &AdulterationCurve) -> Result<DerivedRho> {
    let nf = n as f64;
    let h_max = curve.h_max();
    let (a, b) = (curve.a, curve.b);
    let initial = 0.8 * f64::min((1.0 - h_max.powf(-1.0 / gamma)) / nf, a * (b - 2.0) / (gamma * h_max + a * b) / nf);
    let mut rho = initial;
    for halvings in 0..=MAX_RHO_HALVINGS {
        // theta and t do not enter the assumptions; any valid values do
        if let Ok(p) = MarketParams::new(n, gamma, rho, 2.0, 0.0, 0.5, 1.0) {
            let rep = model::validate(&p, curve);
            if rep.adulteration_gain && rep.revenue_motive_endpoint && rep.revenue_motive_grid {
                return Ok(DerivedRho { rho, initial, halvings });
            }
        }
        rho /= 2.0;
    }
    Err(Error::precondition(format!(
        "no rho satisfies the gain and revenue-motive assumptions after {MAX_RHO_HALVINGS} halvings (start {initial})"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibratedMarket {
    pub params: MarketParams,
    pub curve: AdulterationCurve,
    pub quality: QualityVector,
    /// Active sellers, ordered like `quality`.
    pub included_ids: Vec<String>,
    pub mean_prices: Vec<f64>,
    /// Volume share of the sellers treated as the outside option.
    pub excluded_mass: f64,
    pub quality_constant: f64,
    pub rho: DerivedRho,
}

/// Build a market from seller records: `n` active sellers,
/// `gamma = (n - 0.1)/(n - 1)`, `v0 = 1`, qualities from prices.
pub fn calibrate(records: &[SellerRecord], opts: &CalibrationOptions) -> Result<CalibratedMarket> {
    let mut act = active(records, opts.volume_threshold);
    let n = act.len();
    if n < 2 {
        return Err(Error::precondition(format!(
            "need at least 2 sellers with volume > {}, found {n}",
            opts.volume_threshold
        )));
    }
    act.sort_by(|x, y| y.mean_price().total_cmp(&x.mean_price()).then_with(|| x.seller_id.cmp(&y.seller_id)));
    let gamma = MarketParams::calibrated_gamma(n);
    let constant = calibrated_quality_constant(n);
    let mean_prices: Vec<f64> = act.iter().map(|r| r.mean_price()).collect();
    let alphas: Vec<f64> = mean_prices.iter().map(|p| constant * p.powf(gamma)).collect();
    let quality = QualityVector::new(alphas)?;

    let rho = match opts.rho {
        Some(rho) => DerivedRho { rho, initial: rho, halvings: 0 },
        None => derive_rho(n, gamma, &opts.curve)?,
    };
    let params = MarketParams::new(n, gamma, rho.rho, opts.theta, opts.t, opts.take_rate_cap, 1.0)?;

    let total: u64 = records.iter().map(|r| r.monthly_volume).sum();
    let kept: u64 = act.iter().map(|r| r.monthly_volume).sum();
    let excluded_mass = if total == 0 { 0.0 } else { (total - kept) as f64 / total as f64 };
    Ok(CalibratedMarket {
        params,
        curve: opts.curve,
        quality,
        included_ids: act.iter().map(|r| r.seller_id.clone()).collect(),
        mean_prices,
        excluded_mass,
        quality_constant: constant,
        rho,
    })
}

impl CalibratedMarket {
    /// Records of the included sellers only, with their averaged prices.
    pub fn filtered_records(&self, records: &[SellerRecord]) -> Vec<SellerRecord> {
        records.iter().filter(|r| self.included_ids.contains(&r.seller_id)).cloned().collect()
    }
}
