//! Run manifest, number formatting, errors and exit codes.

use std::io::Write;
use std::path::Path;

use ema_market::numeric::round_sig;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const SIG_DIGITS: usize = 12;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Usage(String),
    /// An oracle or assumption check did not pass.
    Failed {
        message: String,
        detail: Value,
    },
    Lib(ema_market::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use ema_market::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed { .. } => EXIT_FAILED,
            CliError::Lib(E::Domain(_) | E::Parse { .. } | E::Io(_)) => EXIT_USAGE,
            CliError::Lib(_) => EXIT_FAILED,
        }
    }

    fn kind(&self) -> &'static str {
        use ema_market::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Failed { .. } => "check_failed",
            CliError::Lib(e) => match e {
                E::Domain(_) => "domain",
                E::Precondition(_) => "precondition",
                E::OutsideRegime(_) => "outside_regime",
                E::Degenerate(_) => "degenerate",
                E::Consistency(_) => "consistency",
                E::Parse { .. } => "parse",
                E::Io(_) => "io",
            },
        }
    }

    pub fn to_json(&self) -> Value {
        let message = match self {
            CliError::Usage(m) | CliError::Failed { message: m, .. } => m.clone(),
            CliError::Lib(e) => e.to_string(),
        };
        let mut err = json!({ "kind": self.kind(), "message": message, "exit_code": self.exit_code() });
        match self {
            CliError::Lib(ema_market::Error::Parse { line, .. }) => {
                err["line"] = json!(line);
            }
            CliError::Failed { detail, .. } => {
                err["detail"] = round_numbers(detail.clone());
            }
            _ => {}
        }
        json!({ "error": err })
    }
}

impl From<ema_market::Error> for CliError {
    fn from(e: ema_market::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    pub timestamp: String,
    pub config: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, rng_seed: Option<u64>) -> Self {
        let config = serde_json::to_value(config).unwrap_or(Value::Null);
        RunManifest {
            command: command.to_string(),
            config_digest: digest(&config),
            tool_version: env!("CARGO_PKG_VERSION"),
            rng_seed,
            timestamp: timestamp(),
            config,
        }
    }
}

/// SHA-256 of the config with object keys sorted at every level.
pub fn digest(config: &Value) -> String {
    let canonical = serde_json::to_string(&sorted(config)).unwrap_or_default();
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), sorted(&map[k]))).collect::<Map<_, _>>())
        }
        Value::Array(xs) => Value::Array(xs.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

/// UTC ISO-8601; `SOURCE_DATE_EPOCH` pins it for reproducible output.
fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    pinned.unwrap_or_else(chrono::Utc::now).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Round every float to 12 significant digits; integers are left alone.
pub fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(round_sig(x, SIG_DIGITS)).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(round_numbers).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

pub fn fmt_number(x: f64) -> String {
    if x.is_finite() {
        format!("{}", round_sig(x, SIG_DIGITS))
    } else {
        String::new()
    }
}

/// `{"manifest": ..., "result": ...}` as pretty JSON, result numbers rounded.
pub fn document(manifest: &RunManifest, result: &impl Serialize) -> Result<String, CliError> {
    let result = serde_json::to_value(result).map_err(|e| CliError::usage(e.to_string()))?;
    // the echoed config stays exact so it can be fed back in
    let doc = json!({ "manifest": manifest, "result": round_numbers(result) });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::usage(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Flatten a JSON value into `key,value` CSV rows with dotted keys.
pub fn flatten_csv(v: &Value) -> Result<String, CliError> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(map) => map.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(xs) => xs.iter().enumerate().for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::Number(n) => {
                out.push((prefix.to_string(), n.as_f64().map(fmt_number).unwrap_or_else(|| n.to_string())))
            }
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
            Value::Null => out.push((prefix.to_string(), String::new())),
        }
    }
    let mut rows = Vec::new();
    walk("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::from(std::io::Error::other(e));
    w.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::from(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| CliError::usage(e.to_string()))
}

/// Write to `out`, or stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// CSV output carries its manifest in `<out>.manifest.json` next to it.
pub fn emit_manifest_sidecar(out: Option<&Path>, manifest: &RunManifest) -> Result<(), CliError> {
    if let Some(path) = out {
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.json");
        let text = document(manifest, &Value::Null)?;
        std::fs::write(name, text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": {"p": 2.5, "q": [1, 2]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y": {"q": [1, 2], "p": 2.5}, "x": 1}"#).unwrap();
        assert_eq!(digest(&a), digest(&b));
        let c: Value = serde_json::from_str(r#"{"y": {"q": [2, 1], "p": 2.5}, "x": 1}"#).unwrap();
        assert_ne!(digest(&a), digest(&c));
    }

    #[test]
    fn twelve_digits() {
        let v = round_numbers(json!({ "x": 0.1 + 0.2, "n": 7u64, "s": [1.0 / 3.0] }));
        assert_eq!(v.to_string(), r#"{"x":0.3,"n":7,"s":[0.333333333333]}"#);
        assert_eq!(fmt_number(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_number(f64::NAN), "");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::usage("x").exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(ema_market::Error::OutsideRegime("x".into())).exit_code(), EXIT_FAILED);
        assert_eq!(CliError::from(ema_market::Error::Parse { line: 3, message: "x".into() }).exit_code(), EXIT_USAGE);
    }

    #[test]
    fn flatten() {
        let csv = flatten_csv(&json!({ "a": { "b": [1.5, true] }, "c": "x" })).unwrap();
        assert_eq!(csv, "key,value\na.b.0,1.5\na.b.1,true\nc,x\n");
    }
}
