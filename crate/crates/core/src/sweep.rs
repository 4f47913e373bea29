//! Parameter sweeps over curves, penalty intensity, inspections and take rate.
//!
//! Rows come out in grid order with the curve as the outermost axis, then
//! `theta`, `t` and the take rate. A failing grid point yields a flagged row
//! instead of aborting the sweep.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calibration::derive_rho;
use crate::equilibrium::{adulteration_equilibrium, Regime};
use crate::exec::Execution;
use crate::model::{self, AdulterationCurve, MarketParams, QualityVector, ShockRealization};
use crate::platform::optimal_take_rate;
use crate::policy::{traceability_verdict, traceable_pricing, TraceabilityCosts};
use crate::{Error, Result};

/// A fixed take rate or the closed-form optimum at each grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TakeRateSpec {
    Fixed(f64),
    Optimal,
}

impl fmt::Display for TakeRateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TakeRateSpec::Fixed(v) => write!(f, "{v}"),
            TakeRateSpec::Optimal => f.write_str("optimal"),
        }
    }
}

impl std::str::FromStr for TakeRateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "optimal" => Ok(TakeRateSpec::Optimal),
            v => v
                .parse::<f64>()
                .map(TakeRateSpec::Fixed)
                .map_err(|_| Error::domain(format!("take rate must be a number or `optimal`, got `{v}`"))),
        }
    }
}

impl Serialize for TakeRateSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TakeRateSpec::Fixed(v) => s.serialize_f64(*v),
            TakeRateSpec::Optimal => s.serialize_str("optimal"),
        }
    }
}

impl<'de> Deserialize<'de> for TakeRateSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TakeRateSpec::Fixed(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub curves: Vec<AdulterationCurve>,
    pub theta: Vec<f64>,
    pub t: Vec<f64>,
    pub vartheta: Vec<TakeRateSpec>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.curves.len() * self.theta.len() * self.t.len() * self.vartheta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, k: usize) -> (AdulterationCurve, f64, f64, TakeRateSpec) {
        let nv = self.vartheta.len();
        let nt = self.t.len();
        let nth = self.theta.len();
        (
            self.curves[k / (nv * nt * nth)],
            self.theta[(k / (nv * nt)) % nth],
            self.t[(k / nv) % nt],
            self.vartheta[k % nv],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub c_e: f64,
    pub c_s: f64,
    /// Derive `rho` from each curve instead of keeping the base value.
    pub rederive_rho: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { c_e: 0.0, c_s: 0.0, rederive_rho: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFlag {
    AssumptionFailed,
    TraceAddsValue,
    OutsideClosedForm,
    TraceUndefined,
    Error,
}

impl SweepFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepFlag::AssumptionFailed => "assumption_failed",
            SweepFlag::TraceAddsValue => "trace_adds_value",
            SweepFlag::OutsideClosedForm => "outside_closed_form",
            SweepFlag::TraceUndefined => "trace_undefined",
            SweepFlag::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub t: f64,
    pub rho: f64,
    pub vartheta: Option<f64>,
    pub x_star: Option<f64>,
    pub regime: Option<Regime>,
    /// Sellers plus platform, `K g(x) (1 - r x)`.
    pub total_profit: Option<f64>,
    /// Same total on a traceable platform, `K - C_e`.
    pub traceable_profit: Option<f64>,
    pub ep_profit: Option<f64>,
    pub flags: Vec<SweepFlag>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn has(&self, flag: SweepFlag) -> bool {
        self.flags.contains(&flag)
    }
}

pub fn sweep(
    params: &MarketParams,
    quality: &QualityVector,
    grid: &SweepGrid,
    opts: &SweepOptions,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    quality.check_len(params)?;
    let costs = TraceabilityCosts::new(opts.c_e, opts.c_s)?;
    // rho depends on the curve only, so derive it once per curve
    let rhos: Vec<std::result::Result<f64, String>> = grid
        .curves
        .iter()
        .map(|c| {
            if opts.rederive_rho {
                derive_rho(params.n, params.gamma, c).map(|d| d.rho).map_err(|e| e.to_string())
            } else {
                Ok(params.rho)
            }
        })
        .collect();
    let per_curve = grid.len() / grid.curves.len().max(1);
    Ok(exec.map_range(0..grid.len(), |k| {
        let (curve, theta, t, spec) = grid.point(k);
        let rho = rhos[k / per_curve].clone();
        sweep_point(params, quality, curve, rho, theta, t, spec, costs)
    }))
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    base: &MarketParams,
    quality: &QualityVector,
    curve: AdulterationCurve,
    rho: std::result::Result<f64, String>,
    theta: f64,
    t: f64,
    spec: TakeRateSpec,
    costs: TraceabilityCosts,
) -> SweepRow {
    let mut row = SweepRow {
        a: curve.a,
        b: curve.b,
        theta,
        t,
        rho: rho.as_ref().copied().unwrap_or(base.rho),
        vartheta: match spec {
            TakeRateSpec::Fixed(v) => Some(v),
            TakeRateSpec::Optimal => None,
        },
        x_star: None,
        regime: None,
        total_profit: None,
        traceable_profit: None,
        ep_profit: None,
        flags: Vec::new(),
        error: None,
    };
    if let Err(e) = fill_point(&mut row, base, quality, &curve, rho, spec, costs) {
        row.flags.push(SweepFlag::Error);
        row.error = Some(e.to_string());
    }
    row
}

fn fill_point(
    row: &mut SweepRow,
    base: &MarketParams,
    quality: &QualityVector,
    curve: &AdulterationCurve,
    rho: std::result::Result<f64, String>,
    spec: TakeRateSpec,
    costs: TraceabilityCosts,
) -> Result<()> {
    let rho = rho.map_err(|e| {
        row.flags.push(SweepFlag::AssumptionFailed);
        Error::Precondition(e)
    })?;
    let params = base.with_rho(rho)?.with_theta(row.theta)?.with_t(row.t)?;
    if !model::validate(&params, curve).all_pass() {
        row.flags.push(SweepFlag::AssumptionFailed);
    }

    match traceability_verdict(&params, curve, quality, costs.c_e) {
        Ok(v) => {
            if v.adds_value {
                row.flags.push(SweepFlag::TraceAddsValue);
            }
            if v.outside_closed_form {
                row.flags.push(SweepFlag::OutsideClosedForm);
            }
        }
        Err(_) => row.flags.push(SweepFlag::TraceUndefined),
    }

    let take_rate = match spec {
        TakeRateSpec::Fixed(v) => v,
        TakeRateSpec::Optimal => optimal_take_rate(&params, curve, quality)?.take_rate,
    };
    row.vartheta = Some(take_rate);

    let eq = adulteration_equilibrium(&params, curve, take_rate)?;
    let k = model::base_revenue(&params, quality)?;
    let g = model::adulteration_multiplier(&params, curve, eq.dosage);
    row.x_star = Some(eq.dosage);
    row.regime = Some(eq.regime);
    row.total_profit = Some(k * g * (1.0 - params.penalty_risk() * eq.dosage));
    row.ep_profit = Some(take_rate * k * g);
    let traceable = traceable_pricing(&params, quality, ShockRealization::EXPECTED, take_rate, costs)?;
    row.traceable_profit = Some(traceable.total_profit);
    Ok(())
}

pub const CSV_HEADER: [&str; 10] =
    ["a", "b", "theta", "t", "vartheta", "x_star", "regime", "total_profit", "traceable_profit", "flags"];

/// Write rows as CSV. `extra_ep_profit` appends an `ep_profit` column;
/// `fmt` renders every number.
pub fn write_csv<W: Write>(
    rows: &[SweepRow],
    out: W,
    extra_ep_profit: bool,
    fmt: impl Fn(f64) -> String,
) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if extra_ep_profit {
        header.push("ep_profit");
    }
    w.write_record(&header).map_err(io)?;
    let opt = |v: Option<f64>| v.map(&fmt).unwrap_or_default();
    for r in rows {
        let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
        let mut rec = vec![
            fmt(r.a),
            fmt(r.b),
            fmt(r.theta),
            fmt(r.t),
            opt(r.vartheta),
            opt(r.x_star),
            r.regime.map(|g| g.as_str().to_string()).unwrap_or_default(),
            opt(r.total_profit),
            opt(r.traceable_profit),
            flags.join(";"),
        ];
        if extra_ep_profit {
            rec.push(opt(r.ep_profit));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Curves `a in {1/5, 1/10, 1/15}`, `b = 15`.
pub fn default_curves() -> Vec<AdulterationCurve> {
    [5.0, 10.0, 15.0].iter().map(|d| AdulterationCurve { a: 1.0 / d, b: 15.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::arange_inclusive;

    fn base() -> (MarketParams, QualityVector) {
        let g = MarketParams::calibrated_gamma(31);
        let p = MarketParams::new(31, g, 0.005, 3.0, 3.0, 0.05, 1.0).unwrap();
        (p, QualityVector::synthetic(31, 4).unwrap())
    }

    #[test]
    fn grid_order_is_outer_major() {
        let (p, q) = base();
        let grid = SweepGrid {
            curves: default_curves(),
            theta: vec![3.0, 4.0],
            t: vec![3.0, 8.0],
            vartheta: vec![TakeRateSpec::Fixed(0.05)],
        };
        let rows = sweep(&p, &q, &grid, &SweepOptions::default(), Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!((rows[0].a, rows[0].theta, rows[0].t), (0.2, 3.0, 3.0));
        assert_eq!((rows[1].theta, rows[1].t), (3.0, 8.0));
        assert_eq!((rows[2].theta, rows[2].t), (4.0, 3.0));
        assert_eq!(rows[4].a, 0.1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (p, q) = base();
        let grid = SweepGrid {
            curves: default_curves(),
            theta: arange_inclusive(3.0, 10.0, 0.5),
            t: vec![3.0, 8.0, 12.0],
            vartheta: vec![TakeRateSpec::Fixed(0.05), TakeRateSpec::Optimal],
        };
        let opts = SweepOptions::default();
        let s = sweep(&p, &q, &grid, &opts, Execution::Sequential).unwrap();
        let par = sweep(&p, &q, &grid, &opts, Execution::Parallel).unwrap();
        assert_eq!(s, par);
    }

    #[test]
    fn bad_point_is_flagged() {
        let (p, q) = base();
        let grid = SweepGrid {
            curves: vec![AdulterationCurve { a: 0.2, b: 15.0 }],
            theta: vec![3.0],
            t: vec![3.0],
            vartheta: vec![TakeRateSpec::Fixed(0.5)],
        };
        let rows = sweep(&p, &q, &grid, &SweepOptions::default(), Execution::Sequential).unwrap();
        assert!(rows[0].has(SweepFlag::Error));
        assert!(rows[0].x_star.is_none());
    }

    #[test]
    fn take_rate_spec_parses() {
        assert_eq!("optimal".parse::<TakeRateSpec>().unwrap(), TakeRateSpec::Optimal);
        assert_eq!("0.05".parse::<TakeRateSpec>().unwrap(), TakeRateSpec::Fixed(0.05));
        let v: Vec<TakeRateSpec> = serde_json::from_str(r#"[0.1, "optimal"]"#).unwrap();
        assert_eq!(v, vec![TakeRateSpec::Fixed(0.1), TakeRateSpec::Optimal]);
        assert!("x".parse::<TakeRateSpec>().is_err());
    }
}
