//! Run configuration: one JSON document, overridden field by field by flags.

use std::path::Path;

use ema_market::calibration::{self, CalibratedMarket, CalibrationOptions};
use ema_market::dataset::{self, SyntheticConfig};
use ema_market::numeric::arange_inclusive;
use ema_market::oracle::OracleConfig;
use ema_market::sweep::TakeRateSpec;
use ema_market::{AdulterationCurve, MarketParams, QualityVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::output::CliError;

/// Quality seed used when a config names neither qualities nor a seed.
pub const DEFAULT_QUALITY_SEED: u64 = 2_021;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub take_rate_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(deserialize_with = "axis", skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(deserialize_with = "axis", skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(deserialize_with = "axis", skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<Vec<f64>>,
    #[serde(deserialize_with = "axis", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Curve family by `a`, sharing the config's `b`. Not a sweep axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<Vec<f64>>,
    /// Keep the configured `rho` for every curve instead of re-deriving it.
    pub fix_rho: bool,
}

impl SweepSection {
    pub fn axis_count(&self) -> usize {
        [&self.theta, &self.t, &self.vartheta, &self.a].iter().filter(|a| a.is_some()).count()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub market: MarketSection,
    pub curve: CurveSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_seed: Option<u64>,
    /// Seller CSV, or `bundled`, to calibrate `n`, `gamma`, `rho` and the
    /// qualities from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_threshold: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<TakeRateSpec>,
    pub policy: PolicySection,
    pub sweep: SweepSection,
    pub oracle: OracleConfig,
    pub generator: SyntheticConfig,
}

/// A market ready for the library.
pub struct Market {
    pub params: MarketParams,
    pub curve: AdulterationCurve,
    pub quality: QualityVector,
    pub calibrated: Option<CalibratedMarket>,
    /// Seed of the synthetic qualities, if they were drawn.
    pub quality_seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    fn required<T: Copy>(value: Option<T>, name: &str) -> Result<T, CliError> {
        value.ok_or_else(|| CliError::usage(format!("missing field `{name}`")))
    }

    pub fn curve(&self) -> Result<AdulterationCurve, CliError> {
        let a = Self::required(self.curve.a, "curve.a")?;
        let b = Self::required(self.curve.b, "curve.b")?;
        Ok(AdulterationCurve::new(a, b)?)
    }

    pub fn calibration_options(&self) -> Result<CalibrationOptions, CliError> {
        let d = CalibrationOptions::default();
        let curve = match (self.curve.a, self.curve.b) {
            (None, None) => d.curve,
            _ => self.curve()?,
        };
        Ok(CalibrationOptions {
            volume_threshold: self.volume_threshold.unwrap_or(d.volume_threshold),
            curve,
            theta: self.market.theta.unwrap_or(d.theta),
            t: self.market.t.unwrap_or(d.t),
            take_rate_cap: self.market.take_rate_cap.unwrap_or(d.take_rate_cap),
            rho: self.market.rho,
        })
    }

    pub fn market(&self) -> Result<Market, CliError> {
        if let Some(source) = &self.dataset {
            let m = &self.market;
            if m.n.is_some() || m.gamma.is_some() || self.quality.is_some() {
                return Err(CliError::usage(
                    "`n`, `gamma` and `quality` come from the dataset; drop them or the dataset",
                ));
            }
            let records = load_records(source)?;
            let cal = calibration::calibrate(&records, &self.calibration_options()?)?;
            return Ok(Market {
                params: cal.params,
                curve: cal.curve,
                quality: cal.quality.clone(),
                calibrated: Some(cal),
                quality_seed: None,
            });
        }
        let m = &self.market;
        let params = MarketParams::new(
            Self::required(m.n, "market.n")?,
            Self::required(m.gamma, "market.gamma")?,
            Self::required(m.rho, "market.rho")?,
            Self::required(m.theta, "market.theta")?,
            Self::required(m.t, "market.t")?,
            Self::required(m.take_rate_cap, "market.take_rate_cap")?,
            m.v0.unwrap_or(1.0),
        )?;
        let (quality, quality_seed) = match &self.quality {
            Some(q) => (QualityVector::new(q.clone())?, None),
            None => {
                let seed = self.quality_seed.unwrap_or(DEFAULT_QUALITY_SEED);
                (QualityVector::synthetic(params.n, seed)?, Some(seed))
            }
        };
        quality.check_len(&params)?;
        Ok(Market { params, curve: self.curve()?, quality, calibrated: None, quality_seed })
    }

    pub fn take_rate(&self) -> Result<TakeRateSpec, CliError> {
        Self::required(self.vartheta, "vartheta")
    }
}

pub fn load_records(source: &str) -> Result<Vec<calibration::SellerRecord>, CliError> {
    Ok(if source == "bundled" { dataset::bundled_records()? } else { calibration::ingest_path(source)? })
}

/// Parse a number or a `p/q` fraction.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            p / q
        }
        None => s.parse().map_err(|_| format!("bad number `{s}`"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Parse `lo:hi:step` or a comma separated list.
pub fn parse_axis(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (parse_number(lo)?, parse_number(hi)?, parse_number(step)?);
            if step <= 0.0 || hi < lo {
                return Err(format!("axis `{s}` needs lo <= hi and step > 0"));
            }
            Ok(arange_inclusive(lo, hi, step))
        }
        [_] => s.split(',').map(parse_number).collect(),
        _ => Err(format!("axis `{s}` is neither lo:hi:step nor a list")),
    }
}

fn axis<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<f64>),
        One(f64),
        Spec(String),
    }
    Ok(Some(match Raw::deserialize(d)? {
        Raw::List(v) => v,
        Raw::One(v) => vec![v],
        Raw::Spec(s) => parse_axis(&s).map_err(serde::de::Error::custom)?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes() {
        assert_eq!(parse_axis("3:4:0.5").unwrap(), vec![3.0, 3.5, 4.0]);
        assert_eq!(parse_axis("3,8,12").unwrap(), vec![3.0, 8.0, 12.0]);
        assert_eq!(parse_axis("1/5").unwrap(), vec![0.2]);
        assert!(parse_axis("4:3:1").is_err());
        assert!(parse_axis("1:2").is_err());
    }

    #[test]
    fn axis_in_config() {
        let c: Config = serde_json::from_str(r#"{"sweep": {"theta": "3:4:0.5", "t": [3, 8]}}"#).unwrap();
        assert_eq!(c.sweep.theta.as_deref(), Some(&[3.0, 3.5, 4.0][..]));
        assert_eq!(c.sweep.axis_count(), 2);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"markt": {}}"#).is_err());
    }
}
