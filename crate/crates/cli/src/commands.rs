use ema_market::calibration::{self, cv_statistics};
use ema_market::dataset;
use ema_market::equilibrium::{adulteration_thresholds, solve_market};
use ema_market::exec::Execution;
use ema_market::model::{self, ValidationReport};
use ema_market::oracle::{check_take_rate, verify_point};
use ema_market::platform::{optimal_take_rate, profit_shape};
use ema_market::policy::{
    escalation_incentive, min_admin_penalty, traceability_verdict, usage_fee_band, FeeBand, InspectionSplit,
    PolicyReport,
};
use ema_market::sweep::{self, SweepGrid, SweepOptions, TakeRateSpec};
use ema_market::{AdulterationCurve, ShockRealization};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_records, parse_number, Config, Market};
use crate::output::{
    document, emit, emit_manifest_sidecar, flatten_csv, fmt_number, round_numbers, CliError, RunManifest,
};
use crate::{Cli, Command, Format, MarketArgs, PolicyCommand};

fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn apply_market(cfg: &mut Config, m: &MarketArgs) {
    set(&mut cfg.market.n, &m.n);
    set(&mut cfg.market.gamma, &m.gamma);
    set(&mut cfg.market.rho, &m.rho);
    set(&mut cfg.market.theta, &m.theta);
    set(&mut cfg.market.t, &m.t);
    set(&mut cfg.market.take_rate_cap, &m.take_rate_cap);
    set(&mut cfg.market.v0, &m.v0);
    set(&mut cfg.curve.a, &m.a);
    set(&mut cfg.curve.b, &m.b);
    set(&mut cfg.vartheta, &m.vartheta);
    set(&mut cfg.quality_seed, &m.quality_seed);
    set(&mut cfg.dataset, &m.dataset);
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = Config::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.oracle.rng_seed = seed;
        cfg.generator.seed = seed;
    }
    match &cli.command {
        Command::Solve(m) => {
            apply_market(&mut cfg, m);
            solve(cli, &cfg)
        }
        Command::OptimizeTakeRate { market, check } => {
            apply_market(&mut cfg, market);
            optimize(cli, &cfg, *check)
        }
        Command::Sweep(args) => {
            apply_market(&mut cfg, &args.market);
            let s = &mut cfg.sweep;
            set(&mut s.theta, &args.sweep_theta.as_ref().map(|a| a.0.clone()));
            set(&mut s.t, &args.sweep_t.as_ref().map(|a| a.0.clone()));
            set(&mut s.vartheta, &args.sweep_vartheta.as_ref().map(|a| a.0.clone()));
            set(&mut s.a, &args.sweep_a.as_ref().map(|a| a.0.clone()));
            set(&mut s.curves, &args.curves.as_ref().map(|a| a.0.clone()));
            s.fix_rho |= args.fix_rho;
            set(&mut cfg.policy.c_e, &args.c_e);
            set(&mut cfg.policy.c_s, &args.c_s);
            run_sweep(cli, &cfg)
        }
        Command::Policy { lever } => match lever {
            PolicyCommand::Ap(args) => {
                apply_market(&mut cfg, &args.market);
                set(&mut cfg.policy.t_e, &args.t_e);
                policy_ap(cli, cfg, args.t_a.as_deref())
            }
            PolicyCommand::Escalate(m) => {
                apply_market(&mut cfg, m);
                policy_escalate(cli, &cfg)
            }
            PolicyCommand::Trace(args) => {
                apply_market(&mut cfg, &args.market);
                set(&mut cfg.policy.c_e, &args.c_e);
                set(&mut cfg.policy.c_s, &args.c_s);
                policy_trace(cli, &cfg)
            }
        },
        Command::Calibrate(args) => {
            set(&mut cfg.dataset, &args.input);
            set(&mut cfg.volume_threshold, &args.volume_threshold);
            set(&mut cfg.market.rho, &args.rho);
            set(&mut cfg.market.theta, &args.theta);
            set(&mut cfg.market.t, &args.t);
            set(&mut cfg.market.take_rate_cap, &args.take_rate_cap);
            set(&mut cfg.curve.a, &args.a);
            set(&mut cfg.curve.b, &args.b);
            run_calibrate(cli, &cfg)
        }
        Command::Verify(args) => {
            apply_market(&mut cfg, &args.market);
            if let Some(d) = args.mc_draws {
                cfg.oracle.mc_draws = d;
            }
            if let Some(p) = args.dosage_grid_points {
                cfg.oracle.dosage_grid_points = p;
            }
            verify(cli, &cfg, args.inject_dosage)
        }
        Command::GenDataset(args) => {
            if let Some(v) = args.sellers {
                cfg.generator.sellers = v;
            }
            if let Some(v) = args.active {
                cfg.generator.active = v;
            }
            if let Some(v) = args.max_volume {
                cfg.generator.max_volume = v;
            }
            gen_dataset(cli, &cfg)
        }
    }
}

fn format_of(cli: &Cli, default: Format) -> Format {
    cli.global.format.unwrap_or(default)
}

/// Write a JSON result (or its flattened CSV form) with its manifest.
fn finish(cli: &Cli, manifest: &RunManifest, result: &impl Serialize) -> Result<(), CliError> {
    let out = cli.global.out.as_deref();
    match format_of(cli, Format::Json) {
        Format::Json => emit(out, &document(manifest, result)?),
        Format::Csv => {
            let value = serde_json::to_value(result).map_err(|e| CliError::usage(e.to_string()))?;
            emit(out, &flatten_csv(&round_numbers(value))?)?;
            emit_manifest_sidecar(out, manifest)
        }
    }
}

fn assumptions(cli: &Cli, market: &Market) -> Result<Value, CliError> {
    let report: ValidationReport = model::validate(&market.params, &market.curve);
    let detail = json!({ "checks": report, "failures": report.failures() });
    if cli.global.strict && !report.all_pass() {
        return Err(CliError::Failed { message: report.failures().join("; "), detail });
    }
    Ok(detail)
}

fn resolve_take_rate(market: &Market, spec: TakeRateSpec) -> Result<f64, CliError> {
    match spec {
        TakeRateSpec::Fixed(v) => {
            market.params.check_take_rate(v)?;
            Ok(v)
        }
        TakeRateSpec::Optimal => Ok(optimal_take_rate(&market.params, &market.curve, &market.quality)?.take_rate),
    }
}

fn solve(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let market = cfg.market()?;
    let checks = assumptions(cli, &market)?;
    let take_rate = resolve_take_rate(&market, cfg.take_rate()?)?;
    let p = &market.params;
    let out = solve_market(p, &market.curve, &market.quality, take_rate, ShockRealization::EXPECTED)?;
    let result = json!({
        "regime": out.regime,
        "x_star": out.dosage,
        "take_rate": take_rate,
        "penalty_risk": p.penalty_risk(),
        "thresholds": adulteration_thresholds(p, &market.curve)?,
        "v_star": out.v_star,
        "share": out.share,
        "demand": out.demand,
        "prices": out.prices,
        "seller_profits": out.seller_profits,
        "ep_profit": out.ep_profit,
        "assumptions": checks,
    });
    finish(cli, &RunManifest::new("solve", cfg, market.quality_seed), &result)
}

fn optimize(cli: &Cli, cfg: &Config, check: bool) -> Result<(), CliError> {
    let market = cfg.market()?;
    let checks = assumptions(cli, &market)?;
    let (p, c, q) = (&market.params, &market.curve, &market.quality);
    let decision = optimal_take_rate(p, c, q)?;
    let mut result = json!({
        "decision": decision,
        "profit_shape": profit_shape(p, c)?,
        "assumptions": checks,
    });
    if check {
        result["oracle"] = serde_json::to_value(check_take_rate(p, c, q, &cfg.oracle, Execution::Parallel)?)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    finish(cli, &RunManifest::new("optimize-take-rate", cfg, market.quality_seed), &result)
}

fn run_sweep(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let s = &cfg.sweep;
    match s.axis_count() {
        0 => return Err(CliError::usage("sweep needs one or two axes among theta, t, vartheta, a")),
        1 | 2 => {}
        k => return Err(CliError::usage(format!("sweep takes at most two axes, got {k}"))),
    }
    if s.a.is_some() && s.curves.is_some() {
        return Err(CliError::usage("give either a sweep over `a` or a curve list, not both"));
    }
    let market = cfg.market()?;
    assumptions(cli, &market)?;
    let p = &market.params;
    let b = market.curve.b;
    let curves = match s.a.as_ref().or(s.curves.as_ref()) {
        Some(a) => a.iter().map(|&a| AdulterationCurve::new(a, b)).collect::<ema_market::Result<Vec<_>>>()?,
        None => vec![market.curve],
    };
    let vartheta = match &s.vartheta {
        Some(v) => v.iter().map(|&v| TakeRateSpec::Fixed(v)).collect(),
        None => vec![cfg.vartheta.unwrap_or(TakeRateSpec::Optimal)],
    };
    let grid = SweepGrid {
        curves,
        theta: s.theta.clone().unwrap_or_else(|| vec![p.theta]),
        t: s.t.clone().unwrap_or_else(|| vec![p.t]),
        vartheta,
    };
    // rho is a calibration output, so only calibrated markets re-derive it
    let opts = SweepOptions {
        c_e: cfg.policy.c_e.unwrap_or(0.0),
        c_s: cfg.policy.c_s.unwrap_or(0.0),
        rederive_rho: market.calibrated.is_some() && !s.fix_rho,
    };
    let rows = sweep::sweep(p, &market.quality, &grid, &opts, Execution::Parallel)?;
    let manifest = RunManifest::new("sweep", cfg, market.quality_seed);
    let out = cli.global.out.as_deref();
    match format_of(cli, Format::Csv) {
        Format::Json => emit(out, &document(&manifest, &rows)?),
        Format::Csv => {
            let mut buf = Vec::new();
            sweep::write_csv(&rows, &mut buf, true, fmt_number)?;
            emit(out, &String::from_utf8_lossy(&buf))?;
            emit_manifest_sidecar(out, &manifest)
        }
    }
}

fn policy_ap(cli: &Cli, mut cfg: Config, t_a: Option<&str>) -> Result<(), CliError> {
    let market = cfg.market()?;
    let checks = assumptions(cli, &market)?;
    let t_e = cfg.policy.t_e.ok_or_else(|| CliError::usage("missing field `policy.t_e`"))?;
    match t_a {
        Some("large" | "max") => cfg.policy.t_a = Some(market.params.n_f64() - t_e),
        Some(v) => cfg.policy.t_a = Some(parse_number(v).map_err(CliError::usage)?),
        None => {}
    }
    let t_a = cfg.policy.t_a.ok_or_else(|| CliError::usage("missing field `policy.t_a`"))?;
    let take_rate = resolve_take_rate(&market, cfg.take_rate()?)?;
    let split = InspectionSplit::new(t_e, t_a, &market.params)?;
    let ap = min_admin_penalty(&market.params, &market.curve, &market.quality, split, take_rate)?;
    let report = PolicyReport { admin_penalty: Some(ap), ..Default::default() };
    let result = json!({ "take_rate": take_rate, "split": split, "report": report, "assumptions": checks });
    finish(cli, &RunManifest::new("policy ap", &cfg, market.quality_seed), &result)
}

fn policy_escalate(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let market = cfg.market()?;
    let checks = assumptions(cli, &market)?;
    let esc = escalation_incentive(&market.params, &market.curve)?;
    let report = PolicyReport { escalation: Some(esc), ..Default::default() };
    let result = json!({ "theta": market.params.theta, "report": report, "assumptions": checks });
    finish(cli, &RunManifest::new("policy escalate", cfg, market.quality_seed), &result)
}

fn policy_trace(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let market = cfg.market()?;
    let checks = assumptions(cli, &market)?;
    let (p, c, q) = (&market.params, &market.curve, &market.quality);
    let c_e = cfg.policy.c_e.ok_or_else(|| CliError::usage("missing field `policy.c_e`"))?;
    let verdict = traceability_verdict(p, c, q, c_e)?;
    let fee_band = if verdict.adds_value { Some(usage_fee_band(p, c, q, c_e)?) } else { None };
    let c_s_in_band = match (&fee_band, cfg.policy.c_s) {
        (Some(FeeBand::Band { lower, upper, .. }), Some(c_s)) => Some(*lower <= c_s && c_s <= *upper),
        (_, Some(_)) => Some(false),
        _ => None,
    };
    let report = PolicyReport { traceability: Some(verdict), fee_band, ..Default::default() };
    let result = json!({ "report": report, "c_s_in_band": c_s_in_band, "assumptions": checks });
    finish(cli, &RunManifest::new("policy trace", cfg, market.quality_seed), &result)
}

fn run_calibrate(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let source = cfg.dataset.as_deref().ok_or_else(|| CliError::usage("calibrate needs an input CSV or `bundled`"))?;
    let records = load_records(source)?;
    let opts = cfg.calibration_options()?;
    let cv = cv_statistics(&records, opts.volume_threshold)?;
    let m = calibration::calibrate(&records, &opts)?;
    let manifest = RunManifest::new("calibrate", cfg, None);
    if format_of(cli, Format::Json) == Format::Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::from(std::io::Error::other(e));
        w.write_record(["seller_id", "mean_price", "alpha"]).map_err(io)?;
        for ((id, price), alpha) in m.included_ids.iter().zip(&m.mean_prices).zip(m.quality.alphas()) {
            w.write_record([id.clone(), fmt_number(*price), fmt_number(*alpha)]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::from(std::io::Error::other(e.to_string())))?;
        let out = cli.global.out.as_deref();
        emit(out, &String::from_utf8_lossy(&bytes))?;
        return emit_manifest_sidecar(out, &manifest);
    }
    let mut alphas = m.quality.alphas().to_vec();
    alphas.sort_by(f64::total_cmp);
    let k = alphas.len();
    let median = if k % 2 == 1 { alphas[k / 2] } else { 0.5 * (alphas[k / 2 - 1] + alphas[k / 2]) };
    let result = json!({
        "n_active": m.params.n,
        "gamma": m.params.gamma,
        "rho": m.rho,
        "quality_constant": m.quality_constant,
        "alpha": { "min": alphas[0], "median": median, "max": alphas[k - 1] },
        "cv": cv,
        "excluded_mass": m.excluded_mass,
        "params": m.params,
        "curve": m.curve,
        "included_ids": m.included_ids,
    });
    finish(cli, &manifest, &result)
}

fn verify(cli: &Cli, cfg: &Config, inject: Option<f64>) -> Result<(), CliError> {
    let market = cfg.market()?;
    assumptions(cli, &market)?;
    let take_rate = resolve_take_rate(&market, cfg.take_rate()?)?;
    let report = verify_point(
        &market.params,
        &market.curve,
        &market.quality,
        take_rate,
        inject,
        &cfg.oracle,
        Execution::Parallel,
    )?;
    finish(cli, &RunManifest::new("verify", cfg, Some(cfg.oracle.rng_seed)), &report)?;
    if report.passed {
        return Ok(());
    }
    let mut failing = Vec::new();
    if !report.pricing.passed {
        failing.push("pricing");
    }
    if !report.dosage.passed {
        failing.push("dosage");
    }
    if !report.choice.passed {
        failing.push("choice");
    }
    if report.take_rate.passed == Some(false) {
        failing.push("take_rate");
    }
    let detail = json!({
        "failing": failing,
        "pricing": { "max_gain": report.pricing.max_gain, "worst_seller": report.pricing.worst_seller },
        "dosage": {
            "candidate": report.dosage.candidate,
            "max_deviation": report.dosage.max_deviation,
            "worst_seller": report.dosage.worst_seller,
            "best_response": report.dosage.best_responses[report.dosage.worst_seller],
        },
        "choice": { "violations_3sigma": report.choice.violations_3sigma },
        "take_rate": { "relative_gap": report.take_rate.relative_gap, "empirical_pattern": report.take_rate.empirical_pattern },
    });
    Err(CliError::Failed { message: format!("oracle check failed: {}", failing.join(", ")), detail })
}

fn gen_dataset(cli: &Cli, cfg: &Config) -> Result<(), CliError> {
    let rows = dataset::generate(&cfg.generator)?;
    let manifest = RunManifest::new("gen-dataset", cfg, Some(cfg.generator.seed));
    let out = cli.global.out.as_deref();
    match format_of(cli, Format::Csv) {
        Format::Json => emit(out, &document(&manifest, &rows)?),
        Format::Csv => {
            emit(out, &dataset::to_csv_string(&rows)?)?;
            emit_manifest_sidecar(out, &manifest)
        }
    }
}
