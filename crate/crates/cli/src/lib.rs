//! The `dprlab` command line: one subcommand per experiment.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 numerical-contract violation.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dprlab_core::coarse_grain::coarse_grain_bound;
use dprlab_core::order_stats::{growth_witness, run_extremes, uniform_tau_identity};
use dprlab_core::partition::{free_energy_gap, martingale_check, mean_w_mc, PolymerConfig};
use dprlab_core::rng::{replica_rng, Stream};
use dprlab_core::size_bias::{birkner_detector, h_beta};
use dprlab_core::Error;

use config::{Options, Severity};
use output::Row;

/// Martingale discrepancies above this are reported as contract violations.
const MARTINGALE_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Contract(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Contract(m) => write!(f, "contract violation: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ContractViolation(_) | Error::Numerical(_) => CliError::Contract(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Contract(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dprlab", version, about = "Directed polymers with slowly varying walk increments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat TOML file with any of the option keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the configuration diagnostics and exit.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw increments in log-magnitude form.
    SampleWalk(RunArgs),
    /// Entropy of the walk law with its error bracket.
    EntropyCheck(RunArgs),
    /// Free-energy gap (1/N) E ln W_N per beta.
    FreeEnergy(RunArgs),
    /// Monte Carlo mean of W_N per beta.
    MeanW(RunArgs),
    /// Exact martingale discrepancy by enumeration.
    MartingaleCheck(RunArgs),
    /// Entropy criterion and the size-biased W_N detector.
    SizeBiasTest(RunArgs),
    /// Good-rectangle search and the assembled free-energy lower bound.
    CoarseGrainDemo(RunArgs),
    /// Extreme-order events along square checkpoints, or the uniform identity.
    OrderStats(RunArgs),
    /// Large-beta limits of the exponential moment.
    LemmaA1(RunArgs),
    /// Condition (c) along an n grid.
    ConditionC(RunArgs),
}

impl Command {
    fn split(self) -> (&'static str, RunArgs) {
        match self {
            Command::SampleWalk(a) => ("sample-walk", a),
            Command::EntropyCheck(a) => ("entropy-check", a),
            Command::FreeEnergy(a) => ("free-energy", a),
            Command::MeanW(a) => ("mean-w", a),
            Command::MartingaleCheck(a) => ("martingale-check", a),
            Command::SizeBiasTest(a) => ("size-bias-test", a),
            Command::CoarseGrainDemo(a) => ("coarse-grain-demo", a),
            Command::OrderStats(a) => ("order-stats", a),
            Command::LemmaA1(a) => ("lemma-a1", a),
            Command::ConditionC(a) => ("condition-c", a),
        }
    }
}

/// Parses `argv`, runs the experiment and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let (name, args) = cli.command.split();
    match execute(name, args, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "dprlab {name}: {e}");
            e.exit_code()
        }
    }
}

fn execute(name: &str, args: RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = args.config.as_deref().map(config::load_file).transpose()?;
    let given = match &file {
        Some(f) => config::layer(f, &args.opts),
        None => args.opts.clone(),
    };
    let diagnostics = config::validate(name, &given);
    if args.check {
        for d in &diagnostics {
            writeln!(stdout, "{}", serde_json::to_string(d).expect("diagnostic")).map_err(io)?;
        }
        return match diagnostics.iter().find(|d| d.severity == Severity::Error) {
            Some(d) => Err(CliError::Config(d.message.clone())),
            None => Ok(()),
        };
    }
    if let Some(d) = diagnostics.iter().find(|d| d.severity == Severity::Error) {
        return Err(CliError::Config(d.message.clone()));
    }
    let resolved = config::resolve(name, file.as_ref(), &args.opts)?;
    if let Some(w) = resolved.workers {
        // Results do not depend on the pool size; a second initialisation in
        // the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w as usize).build_global();
    }
    let rows = dispatch(name, &resolved)?;
    let seed = resolved.seed.expect("seed has a default");
    let digest = config::digest(&resolved);
    let rows = output::stamp(rows, seed, &digest);
    let format = resolved.format.as_deref().unwrap_or("csv");
    match &resolved.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(io)?;
            output::write_rows(&rows, format, std::io::BufWriter::new(file))?;
            let meta = json!({
                "command": name,
                "version": dprlab_core::VERSION,
                "config_digest": digest,
                "config": config::echo(&resolved),
                "rows": rows.len(),
            });
            let text = serde_json::to_string_pretty(&meta).expect("metadata");
            std::fs::write(output::meta_path(path), text + "\n").map_err(io)?;
        }
        None => output::write_rows(&rows, format, &mut *stdout)?,
    }
    Ok(())
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn polymer(o: &Options, beta: f64, horizon: u64) -> Result<PolymerConfig, CliError> {
    Ok(PolymerConfig {
        beta,
        horizon: horizon as usize,
        half_width: o.m.expect("m has a default") as usize,
        law: config::law(o)?,
        env: config::environment(o)?,
        seed: o.seed.expect("seed has a default"),
    })
}

fn betas(o: &Options) -> Vec<f64> {
    o.betas.clone().unwrap_or_else(|| vec![o.beta.expect("beta has a default")])
}

fn required<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing {name}")))
}

fn with(mut r: Row, extra: &[(&str, Value)]) -> Row {
    let mut out = Row::new();
    for (k, v) in extra {
        out.insert((*k).to_string(), v.clone());
    }
    out.append(&mut r);
    out
}

fn dispatch(name: &str, o: &Options) -> Result<Vec<Row>, CliError> {
    let seed = required(o.seed, "seed")?;
    let replicas = required(o.replicas, "replicas")? as usize;
    match name {
        "sample-walk" => {
            let law = config::law(o)?;
            let mut rng = replica_rng(seed, Stream::Walk, 0);
            Ok((0..required(o.n, "n")?)
                .map(|i| {
                    let x = law.sample_logmag(&mut rng);
                    with(
                        Row::new(),
                        &[
                            ("index", json!(i)),
                            ("sign", json!(x.sign())),
                            ("ln_abs", if x.is_zero() { Value::Null } else { json!(x.lnmag()) }),
                            ("value", x.to_i64().map_or(Value::Null, |v| json!(v))),
                        ],
                    )
                })
                .collect())
        }
        "entropy-check" => {
            let law = config::law(o)?;
            let h = law.entropy(required(o.tol, "tol")?)?;
            let width = h.width().map_or(Value::Null, |w| json!(w));
            let mut r = output::row(&h);
            r.insert("width".into(), width);
            Ok(vec![with(r, &[("family", json!(law.family().name()))])])
        }
        "free-energy" | "mean-w" => {
            let n = required(o.n, "n")?;
            betas(o)
                .into_iter()
                .map(|beta| {
                    let cfg = polymer(o, beta, n)?;
                    let r = if name == "free-energy" {
                        output::row(&free_energy_gap(&cfg, replicas)?)
                    } else {
                        let est = mean_w_mc(&cfg, replicas)?;
                        let mut r = output::row(&est);
                        r.insert("mass_loss".into(), json!(cfg.law.abs_exceed(2 * cfg.half_width as u64)));
                        r
                    };
                    Ok(with(r, &[("beta", json!(beta)), ("n", json!(n)), ("m", json!(o.m))]))
                })
                .collect()
        }
        "martingale-check" => {
            let n = required(o.n, "n")?;
            betas(o)
                .into_iter()
                .map(|beta| {
                    let d = martingale_check(&polymer(o, beta, n)?, replicas)?;
                    if d > MARTINGALE_TOLERANCE {
                        return Err(CliError::Contract(format!(
                            "martingale discrepancy {d:e} at beta = {beta}"
                        )));
                    }
                    Ok(with(
                        Row::new(),
                        &[
                            ("beta", json!(beta)),
                            ("n", json!(n)),
                            ("m", json!(o.m)),
                            ("max_discrepancy", json!(d)),
                        ],
                    ))
                })
                .collect()
        }
        "size-bias-test" => {
            let law = config::law(o)?;
            let env = config::environment(o)?;
            let beta = required(o.beta, "beta")?;
            let mut rows = Vec::new();
            let head = match h_beta(&law, &env, beta) {
                Ok(h) => output::row(&h),
                Err(Error::DivergentEntropy { .. }) => {
                    let mut r = Row::new();
                    r.insert("entropy_status".into(), json!("divergent"));
                    r
                }
                Err(e) => return Err(e.into()),
            };
            rows.push(with(head, &[("kind", json!("h_beta")), ("beta", json!(beta))]));
            let grid: Vec<usize> = o.n_grid.clone().unwrap_or_default().iter().map(|n| *n as usize).collect();
            let levels = o.levels.clone().unwrap_or_default();
            let top = *grid.last().ok_or_else(|| CliError::Config("empty n_grid".into()))?;
            let report = birkner_detector(&polymer(o, beta, top as u64)?, &grid, &levels, replicas)?;
            for r in &report.rows {
                rows.push(with(output::row(r), &[("kind", json!("detector"))]));
            }
            for t in &report.trends {
                rows.push(with(output::row(t), &[("kind", json!("trend"))]));
            }
            Ok(rows)
        }
        "coarse-grain-demo" => {
            let law = config::law(o)?;
            let env = config::environment(o)?;
            let beta = required(o.beta, "beta")?;
            let eps = required(o.epsilon, "epsilon")?;
            o.n_grid
                .clone()
                .unwrap_or_default()
                .into_iter()
                .map(|n| Ok(output::row(&coarse_grain_bound(&law, &env, beta, n as usize, eps, replicas, seed)?)))
                .collect()
        }
        "order-stats" => {
            if let Some(n) = o.identity_n {
                let t = uniform_tau_identity(n, replicas, seed)?;
                return Ok(vec![output::row(&t)]);
            }
            let law = config::law(o)?;
            let n_max = required(o.n, "n")?;
            let k = required(o.k, "k")?;
            let rows = run_extremes(&law, n_max, k, replicas, seed)?;
            let witness = growth_witness(&law, k, n_max, o.n_min, replicas, seed)?;
            let onset = witness.median_onset.map_or(Value::Null, |v| json!(v));
            rows.iter()
                .map(|r| {
                    if r.chain_failures > 0 {
                        return Err(CliError::Contract(format!("bound chain failed at n = {}", r.n)));
                    }
                    Ok(with(
                        Row::new(),
                        &[
                            ("n", json!(r.n)),
                            ("freq_b", json!(r.freq_b)),
                            ("freq_c", json!(r.freq_c)),
                            ("freq_d", if r.freq_d.is_nan() { Value::Null } else { json!(r.freq_d) }),
                            ("onset_median", onset.clone()),
                            ("witness_fraction", json!(witness.fraction)),
                        ],
                    ))
                })
                .collect()
        }
        "lemma-a1" => {
            let env = config::environment(o)?;
            let rows = env.limit_diagnostics(&betas(o), required(o.k, "k")?)?;
            Ok(rows.iter().map(output::row).collect())
        }
        "condition-c" => {
            let law = config::law(o)?;
            let gamma = required(o.gamma, "gamma")?;
            o.n_grid
                .clone()
                .unwrap_or_default()
                .into_iter()
                .map(|n| {
                    let c = law.condition_c(n, gamma)?;
                    let mut r = output::row(&c);
                    r.insert("s_n_exact".into(), c.s_n.exact_abs().map_or(Value::Null, |v| json!(v)));
                    Ok(r)
                })
                .collect()
        }
        other => Err(CliError::Config(format!("unknown subcommand {other}"))),
    }
}
