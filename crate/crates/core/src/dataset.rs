//! Seeded synthetic seller data.
//!
//! Shape of the default market: 88 sellers of which 31 sell more than 10
//! units, the largest seller sells 46700 units and the active sellers carry
//! well over 90% of all volume. Each seller lists one to three variants.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::SellerRecord;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 20_211_209;

/// The dataset shipped with the crate, generated from [`SyntheticConfig::default`].
pub const BUNDLED_CSV: &str = include_str!("../data/synthetic_sellers.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub sellers: usize,
    pub active: usize,
    pub max_volume: u64,
    /// Volumes of active sellers decay like `rank^-volume_decay`.
    pub volume_decay: f64,
    pub volume_threshold: u64,
    pub price_range: (f64, f64),
    pub max_variants: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            sellers: 88,
            active: 31,
            max_volume: 46_700,
            volume_decay: 1.2,
            volume_threshold: 10,
            price_range: (25.0, 90.0),
            max_variants: 3,
            seed: DEFAULT_SEED,
        }
    }
}

/// One CSV row: a single variant of a seller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub seller_id: String,
    pub price: f64,
    pub volume: u64,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<VariantRow>> {
    if cfg.active > cfg.sellers || cfg.sellers == 0 {
        return Err(Error::domain("active sellers must not exceed sellers"));
    }
    if cfg.max_variants == 0 || !(cfg.price_range.0 > 0.0 && cfg.price_range.1 > cfg.price_range.0) {
        return Err(Error::domain("need at least one variant and a positive price range"));
    }
    if cfg.max_volume <= cfg.volume_threshold {
        return Err(Error::domain("max volume must exceed the threshold"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut volumes: Vec<u64> = (0..cfg.sellers)
        .map(|k| {
            if k == 0 {
                cfg.max_volume
            } else if k < cfg.active {
                let v = cfg.max_volume as f64 * ((k + 1) as f64).powf(-cfg.volume_decay) * rng.random_range(0.7..1.0);
                (v.round() as u64).clamp(cfg.volume_threshold + 1, cfg.max_volume)
            } else {
                rng.random_range(0..=cfg.volume_threshold)
            }
        })
        .collect();
    volumes.shuffle(&mut rng);

    let width = cfg.sellers.to_string().len().max(3);
    let mut rows = Vec::new();
    for (k, &volume) in volumes.iter().enumerate() {
        let id = format!("S{:0width$}", k + 1);
        let base = rng.random_range(cfg.price_range.0..cfg.price_range.1);
        let variants = rng.random_range(1..=cfg.max_variants);
        // split the volume at sorted random cut points
        let mut cuts: Vec<u64> = (1..variants).map(|_| rng.random_range(0..=volume)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        for j in 0..variants {
            let next = cuts.get(j).copied().unwrap_or(volume);
            let price = (base * rng.random_range(0.85..1.15) * 100.0).round() / 100.0;
            rows.push(VariantRow { seller_id: id.clone(), price, volume: next - prev });
            prev = next;
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[VariantRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[VariantRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Parsed records of [`BUNDLED_CSV`].
pub fn bundled_records() -> Result<Vec<SellerRecord>> {
    crate::calibration::ingest(BUNDLED_CSV.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, ingest, CalibrationOptions};

    #[test]
    fn default_shape() {
        let rows = generate(&SyntheticConfig::default()).unwrap();
        let recs = ingest(to_csv_string(&rows).unwrap().as_bytes()).unwrap();
        assert_eq!(recs.len(), 88);
        let active: Vec<_> = recs.iter().filter(|r| r.monthly_volume > 10).collect();
        assert_eq!(active.len(), 31);
        let total: u64 = recs.iter().map(|r| r.monthly_volume).sum();
        let kept: u64 = active.iter().map(|r| r.monthly_volume).sum();
        assert!(kept as f64 >= 0.9 * total as f64);
        assert_eq!(recs.iter().map(|r| r.monthly_volume).max(), Some(46_700));
        assert!(recs.iter().all(|r| (1..=3).contains(&r.prices.len())));
        assert!(recs.iter().any(|r| r.prices.len() > 1));
    }

    #[test]
    fn bundled_file_is_reproducible() {
        let rows = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(to_csv_string(&rows).unwrap(), BUNDLED_CSV);
    }

    #[test]
    fn bundled_market_calibrates() {
        let m = calibrate(&bundled_records().unwrap(), &CalibrationOptions::default()).unwrap();
        assert_eq!(m.params.n, 31);
        assert!((m.params.gamma - 1.03).abs() < 1e-15);
        assert!(m.excluded_mass <= 0.1);
    }

    #[test]
    fn seeds_differ() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a, b);
    }
}
