//! Experiment configuration: a flat key-value document, overridable flag by flag.
//!
//! Resolution order is built-in defaults, then the `--config` file, then
//! command-line flags. The resolved document is echoed into the metadata and
//! its digest into every output row.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use dprlab_core::{EnvironmentLaw, Family, IncrementLaw};

use crate::CliError;

/// Every experiment parameter. TOML keys are the field names; flags are
/// their kebab-case forms.
#[derive(Args, Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Walk family: critical, log_tail, loglog_tail, power_tail, nearest_neighbor.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Tail exponent of log_tail and power_tail.
    #[arg(long)]
    pub a: Option<f64>,
    /// Tail exponent of loglog_tail.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub m0: Option<u64>,
    #[arg(long)]
    pub k0: Option<f64>,
    /// Disorder law: gaussian, bernoulli, discrete.
    #[arg(long)]
    pub env: Option<String>,
    /// Bernoulli success probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Discrete atoms as `value:prob,value:prob,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub atoms: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Horizon, sample count or `n_max`, depending on the subcommand.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<u64>>,
    /// Window half-width.
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Growth base `K`, or the threshold `K` for the large-β diagnostics.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub identity_n: Option<u64>,
    #[arg(long)]
    pub n_min: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub workers: Option<u64>,
}

/// Keys that do not change results and are left out of the digest.
const PRESENTATION_KEYS: [&str; 3] = ["out", "format", "workers"];

fn to_map(o: &Options) -> Map<String, Value> {
    match serde_json::to_value(o).expect("options serialize") {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => unreachable!("options are a struct"),
    }
}

fn from_map(m: Map<String, Value>) -> Result<Options, CliError> {
    serde_json::from_value(Value::Object(m)).map_err(|e| CliError::Config(e.to_string()))
}

/// `top` wins wherever it sets a key.
pub fn layer(base: &Options, top: &Options) -> Options {
    let mut m = to_map(base);
    m.extend(to_map(top));
    from_map(m).expect("layering well-typed options")
}

pub fn load_file(path: &Path) -> Result<Options, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Built-in defaults for one subcommand, given the partially merged options
/// (family-specific parameters depend on the chosen family).
pub fn defaults(command: &str, given: &Options) -> Options {
    let family = given.family.clone().unwrap_or_else(|| "critical".into());
    let mut d = Options {
        family: Some(family.clone()),
        env: Some("gaussian".into()),
        beta: Some(1.0),
        m: Some(16),
        replicas: Some(200),
        seed: Some(1),
        format: Some("csv".into()),
        ..Options::default()
    };
    match family.as_str() {
        "critical" => d.alpha = Some(-2.0),
        "log_tail" | "power_tail" => d.a = Some(1.0),
        "loglog_tail" => d.b = Some(1.0),
        _ => {}
    }
    if given.env.as_deref() == Some("bernoulli") {
        d.p = Some(0.5);
    }
    match command {
        "sample-walk" => d.n = Some(10),
        "entropy-check" => d.tol = Some(1e-6),
        "free-energy" | "mean-w" => d.n = Some(16),
        "martingale-check" => {
            d.n = Some(3);
            d.m = Some(2);
            d.env = Some("bernoulli".into());
            d.p = Some(0.5);
            d.replicas = Some(4);
        }
        "size-bias-test" => {
            d.beta = Some(2.5);
            d.m = Some(64);
            d.n_grid = Some(vec![8, 16, 32, 64]);
            d.levels = Some(vec![2.0, 10.0]);
            d.replicas = Some(2000);
            d.tol = Some(1e-6);
        }
        "coarse-grain-demo" => {
            d.beta = Some(0.5);
            d.n_grid = Some(vec![6]);
            d.epsilon = Some(0.2);
            d.replicas = Some(2000);
        }
        "order-stats" => {
            d.family = Some(given.family.clone().unwrap_or_else(|| "log_tail".into()));
            if d.family.as_deref() == Some("log_tail") {
                d.alpha = None;
                d.a = Some(1.0);
            }
            d.n = Some(10_000);
            d.k = Some(2.0);
            d.replicas = Some(200);
        }
        "lemma-a1" => {
            d.env = Some("bernoulli".into());
            d.p = Some(0.5);
            d.betas = Some(vec![1.0, 5.0, 10.0, 20.0, 50.0]);
            d.k = Some(0.5);
        }
        "condition-c" => {
            d.n_grid = Some(vec![10_000, 100_000, 1_000_000]);
            d.gamma = Some(0.75);
        }
        _ => {}
    }
    d
}

/// Defaults, then file, then flags.
pub fn resolve(command: &str, file: Option<&Options>, flags: &Options) -> Result<Options, CliError> {
    let given = match file {
        Some(f) => layer(f, flags),
        None => flags.clone(),
    };
    let base = defaults(command, &given);
    let merged = layer(&base, &given);
    // Family parameters for another family are dropped rather than echoed.
    let mut m = to_map(&merged);
    let keep: &[&str] = match merged.family.as_deref() {
        Some("critical") => &["alpha"],
        Some("log_tail") | Some("power_tail") => &["a"],
        Some("loglog_tail") => &["b"],
        _ => &[],
    };
    for key in ["alpha", "a", "b"] {
        if !keep.contains(&key) && to_map(&given).get(key).is_none() {
            m.remove(key);
        }
    }
    if merged.env.as_deref() != Some("bernoulli") && given.p.is_none() {
        m.remove("p");
    }
    from_map(m)
}

/// SHA-256 prefix of the canonical JSON of the result-defining keys.
pub fn digest(o: &Options) -> String {
    let mut m = to_map(o);
    for k in PRESENTATION_KEYS {
        m.remove(k);
    }
    let sorted: std::collections::BTreeMap<_, _> = m.into_iter().collect();
    let bytes = serde_json::to_vec(&sorted).expect("canonical json");
    hex::encode(Sha256::digest(&bytes))[..16].to_string()
}

pub fn echo(o: &Options) -> Value {
    Value::Object(to_map(o))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

fn error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic {
        severity: Severity::Error,
        message: msg.into(),
    }
}

/// Cross-field checks. With nothing set the result is a summary of the
/// defaults the command would run with.
pub fn validate(command: &str, given: &Options) -> Vec<Diagnostic> {
    let resolved = match resolve(command, None, given) {
        Ok(r) => r,
        Err(e) => return vec![error(e.to_string())],
    };
    let mut out = Vec::new();
    if *given == Options::default() {
        for (k, v) in to_map(&resolved) {
            out.push(Diagnostic {
                severity: Severity::Info,
                message: format!("default {k} = {v}"),
            });
        }
    }
    if let Err(e) = law(&resolved) {
        out.push(error(e.to_string()));
    }
    if let Err(e) = environment(&resolved) {
        out.push(error(e.to_string()));
    }
    if resolved.m == Some(0) {
        out.push(error("window half-width m must be >= 1"));
    }
    if let Some(b) = resolved.beta {
        if !(b >= 0.0 && b.is_finite()) {
            out.push(error(format!("beta = {b} must be finite and >= 0")));
        }
    }
    if resolved.replicas == Some(0) {
        out.push(error("replicas must be >= 1"));
    }
    if command == "condition-c" {
        if let Some(g) = resolved.gamma {
            if g <= 0.5 {
                out.push(error(format!("gamma = {g} must exceed 1/2")));
            }
        }
    }
    if command == "coarse-grain-demo" && resolved.family.as_deref() == Some("nearest_neighbor") {
        out.push(error("coarse-graining needs a positive kernel; nearest_neighbor is rejected"));
    }
    if let Some(f) = resolved.format.as_deref() {
        if f != "csv" && f != "jsonl" {
            out.push(error(format!("unknown format {f:?}; use csv or jsonl")));
        }
    }
    out
}

pub fn law(o: &Options) -> Result<IncrementLaw, CliError> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("missing {name}")));
    let family = match o.family.as_deref().unwrap_or("critical") {
        "critical" => Family::Critical {
            alpha: need(o.alpha, "alpha")?,
        },
        "log_tail" => Family::LogTail { a: need(o.a, "a")? },
        "loglog_tail" => Family::LogLogTail { b: need(o.b, "b")? },
        "power_tail" => Family::PowerTail { a: need(o.a, "a")? },
        "nearest_neighbor" => Family::NearestNeighbor,
        other => return Err(CliError::Config(format!("unknown family {other:?}"))),
    };
    Ok(IncrementLaw::new(family, o.m0, o.k0)?)
}

fn parse_atoms(s: &str) -> Result<Vec<(f64, f64)>, CliError> {
    s.split(',')
        .map(|pair| {
            let (v, p) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("atom {pair:?} is not value:prob")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("atom {pair:?}: {e}")))
            };
            Ok((parse(v)?, parse(p)?))
        })
        .collect()
}

pub fn environment(o: &Options) -> Result<EnvironmentLaw, CliError> {
    match o.env.as_deref().unwrap_or("gaussian") {
        "gaussian" => Ok(EnvironmentLaw::Gaussian),
        "bernoulli" => Ok(EnvironmentLaw::bernoulli(
            o.p.ok_or_else(|| CliError::Config("missing p".into()))?,
        )?),
        "discrete" => Ok(EnvironmentLaw::discrete(parse_atoms(
            o.atoms
                .as_deref()
                .ok_or_else(|| CliError::Config("missing atoms".into()))?,
        )?)?),
        other => Err(CliError::Config(format!("unknown env {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = Options {
            beta: Some(0.3),
            m: Some(5),
            ..Options::default()
        };
        let flags = Options {
            beta: Some(0.7),
            ..Options::default()
        };
        let r = resolve("free-energy", Some(&file), &flags).unwrap();
        assert_eq!((r.beta, r.m, r.n), (Some(0.7), Some(5), Some(16)));
        assert_eq!(r.alpha, Some(-2.0));
        assert!(r.a.is_none());
    }

    #[test]
    fn digest_ignores_presentation() {
        let a = resolve("mean-w", None, &Options::default()).unwrap();
        let mut b = a.clone();
        b.out = Some("x.csv".into());
        b.workers = Some(3);
        assert_eq!(digest(&a), digest(&b));
        b.seed = Some(99);
        assert_ne!(digest(&a), digest(&b));
    }

    #[test]
    fn diagnostics() {
        let empty = validate("free-energy", &Options::default());
        assert!(!empty.is_empty() && empty.iter().all(|d| d.severity == Severity::Info));
        let gamma = Options {
            gamma: Some(0.4),
            ..Options::default()
        };
        assert!(validate("condition-c", &gamma).iter().any(|d| d.severity == Severity::Error));
        let m = Options {
            m: Some(0),
            ..Options::default()
        };
        assert!(validate("mean-w", &m).iter().any(|d| d.severity == Severity::Error));
        let nn = Options {
            family: Some("nearest_neighbor".into()),
            ..Options::default()
        };
        assert!(validate("coarse-grain-demo", &nn).iter().any(|d| d.severity == Severity::Error));
        assert!(validate("mean-w", &nn).iter().all(|d| d.severity != Severity::Error));
    }

    #[test]
    fn atoms_parse() {
        assert_eq!(parse_atoms("-1:0.3, 2:0.7").unwrap(), vec![(-1.0, 0.3), (2.0, 0.7)]);
        assert!(parse_atoms("1;0.5").is_err());
    }
}
