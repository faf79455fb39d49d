//! Size-biased environments and the entropy criterion for strong disorder.
//!
//! Under the size-biased law the environment is the base field with the
//! sites of one independent walk path replaced by tilted values. Paths are
//! drawn from the same windowed kernel the DP uses, so the single-path lower
//! bound `ln W_n ≥ Σ_k [ln K̄(X_k) + βω̃_k - λ(β)]` holds exactly.

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::partition::{exact_w_with, PolymerConfig, WTrajectory, WindowKernel};
use crate::rng::{replica_rng, Stream};
use crate::stats::{proportion, Accumulator, Estimate};
use crate::walk_laws::{Entropy, IncrementLaw};

/// Tolerance for the entropy bracket used by the criterion.
pub const ENTROPY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HBeta {
    /// `βλ'(β) - λ(β) - H(K)`.
    pub value: f64,
    pub entropy: f64,
    pub excess: f64,
}

/// The drift `h_β`; positive values certify strong disorder.
pub fn h_beta(law: &IncrementLaw, env: &EnvironmentLaw, beta: f64) -> Result<HBeta> {
    let entropy = match law.entropy(ENTROPY_TOL)? {
        Entropy::Finite { value, .. } => value,
        Entropy::Divergent { lower_bound } => return Err(Error::DivergentEntropy { lower_bound }),
    };
    let excess = env.excess(beta);
    Ok(HBeta {
        value: excess - entropy,
        entropy,
        excess,
    })
}

/// Empirical mean of `ln K(X) + βω̃ - λ(β)` over `replicas × n_steps` i.i.d.
/// terms. Increments are drawn uncapped in log-magnitude form: for
/// slowly varying tails, any cap leaving less than `1e-6` of the mass
/// exceeds every fixed-width integer.
pub fn lln_slope_check(
    law: &IncrementLaw,
    env: &EnvironmentLaw,
    beta: f64,
    n_steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    if let Entropy::Divergent { lower_bound } = law.entropy(ENTROPY_TOL)? {
        return Err(Error::DivergentEntropy { lower_bound });
    }
    if n_steps == 0 || replicas == 0 {
        return Err(Error::invalid("need at least one step and one replica"));
    }
    let lambda = env.lambda(beta);
    let parts: Vec<Accumulator> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut walk = replica_rng(seed, Stream::Walk, r);
            let mut tilt = replica_rng(seed, Stream::Tilt, r);
            let mut acc = Accumulator::new();
            for _ in 0..n_steps {
                let x = law.sample_logmag(&mut walk);
                let term = law.ln_pmf_logmag(&x) + beta * env.tilted_sample(beta, &mut tilt) - lambda;
                acc.push(term);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new();
    for p in &parts {
        total.merge(p);
    }
    Ok(total.estimate())
}

/// One replica of the size-biased environment.
#[derive(Clone, Debug, Serialize)]
pub struct SizeBiasRun {
    /// Step residues `X_k` on the window ring.
    pub steps: Vec<i64>,
    /// Positions `S_1..S_N`.
    pub path: Vec<i64>,
    /// `ω̃_1..ω̃_N` placed at `(k, S_k)`.
    pub tilted: Vec<f64>,
    pub trajectory: WTrajectory,
    /// Running sums `Σ_{k ≤ n} [ln K̄(X_k) + βω̃_k - λ(β)]`.
    pub path_bound: Vec<f64>,
}

/// Builds replica `r` of the size-biased environment and runs the DP on it.
/// Fails with a contract violation if the single-path bound is broken.
pub fn size_biased_run(config: &PolymerConfig, kernel: &WindowKernel, replica: u64) -> Result<SizeBiasRun> {
    let n = config.horizon;
    let beta = config.beta;
    let lambda = config.env.lambda(beta);
    let mut path_rng = replica_rng(config.seed, Stream::Path, replica);
    let mut tilt_rng = replica_rng(config.seed, Stream::Tilt, replica);
    let mut steps = Vec::with_capacity(n);
    let mut path = Vec::with_capacity(n);
    let mut tilted = Vec::with_capacity(n);
    let mut path_bound = Vec::with_capacity(n);
    let (mut z, mut acc) = (0i64, 0.0);
    for _ in 0..n {
        let step = kernel.sample_step(&mut path_rng);
        z = kernel.wrap(z + step);
        let w = config.env.tilted_sample(beta, &mut tilt_rng);
        acc += kernel.folded(step).ln() + beta * w - lambda;
        steps.push(step);
        path.push(z);
        tilted.push(w);
        path_bound.push(acc);
    }
    let field = config.field(replica).with_path_overlay(&path, &tilted)?;
    let trajectory = exact_w_with(kernel, beta, n, &field);
    for (k, (lw, b)) in trajectory.log_w.iter().zip(&path_bound).enumerate() {
        if *lw < b - 1e-9 * (1.0 + b.abs()) {
            return Err(Error::contract(format!(
                "single-path bound broken at n = {}: ln W = {lw} < {b}",
                k + 1
            )));
        }
    }
    Ok(SizeBiasRun {
        steps,
        path,
        tilted,
        trajectory,
        path_bound,
    })
}

fn runs(config: &PolymerConfig, replicas: usize) -> Result<Vec<SizeBiasRun>> {
    config.validate()?;
    let kernel = WindowKernel::new(&config.law, config.half_width)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| size_biased_run(config, &kernel, r))
        .collect()
}

/// `W_N` under the size-biased environment, one value per replica.
pub fn size_biased_w(config: &PolymerConfig, replicas: usize) -> Result<Vec<f64>> {
    Ok(runs(config, replicas)?
        .iter()
        .map(|r| r.trajectory.w[config.horizon - 1])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// Fractions grow by at least three pooled standard errors.
    Increasing,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DetectorRow {
    pub n: usize,
    pub level: f64,
    pub fraction: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelTrend {
    pub level: f64,
    pub first_n: usize,
    pub last_n: usize,
    pub diff: f64,
    pub pooled_stderr: f64,
    pub trend: Trend,
    /// Flat within noise and clearly below one at the largest N.
    pub plateau_below_one: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectorReport {
    pub rows: Vec<DetectorRow>,
    pub trends: Vec<LevelTrend>,
}

/// Fractions of size-biased `W_N ≥ L` along `n_grid`; one DP run per replica
/// to the largest N supplies every grid point.
pub fn birkner_detector(
    config: &PolymerConfig,
    n_grid: &[usize],
    levels: &[f64],
    replicas: usize,
) -> Result<DetectorReport> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] < 1 {
        return Err(Error::invalid("N grid must be non-empty and strictly increasing"));
    }
    if levels.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("levels must be positive"));
    }
    if replicas < 2 {
        return Err(Error::invalid("need at least two replicas"));
    }
    let mut cfg = config.clone();
    cfg.horizon = *n_grid.last().expect("non-empty");
    let all = runs(&cfg, replicas)?;
    let mut rows = Vec::new();
    let mut trends = Vec::new();
    for &level in levels {
        let ln_level = level.ln();
        let per_n: Vec<Estimate> = n_grid
            .iter()
            .map(|&n| {
                let hits = all.iter().filter(|r| r.trajectory.log_w[n - 1] >= ln_level).count();
                proportion(hits, replicas)
            })
            .collect();
        for (&n, est) in n_grid.iter().zip(&per_n) {
            rows.push(DetectorRow {
                n,
                level,
                fraction: est.mean,
                stderr: est.stderr,
            });
        }
        let (first, last) = (per_n[0], per_n[per_n.len() - 1]);
        let diff = last.mean - first.mean;
        let pooled = (first.stderr.powi(2) + last.stderr.powi(2)).sqrt();
        let trend = if diff > 0.0 && diff >= 3.0 * pooled {
            Trend::Increasing
        } else {
            Trend::Inconclusive
        };
        trends.push(LevelTrend {
            level,
            first_n: n_grid[0],
            last_n: cfg.horizon,
            diff,
            pooled_stderr: pooled,
            trend,
            plateau_below_one: trend == Trend::Inconclusive && last.mean + 3.0 * last.stderr < 1.0,
        });
    }
    Ok(DetectorReport { rows, trends })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_field::LatticeField;
    use crate::stats::{ks_critical_1pct, ks_statistic};

    fn config(beta: f64, n: usize, m: usize, env: EnvironmentLaw) -> PolymerConfig {
        PolymerConfig {
            beta,
            horizon: n,
            half_width: m,
            law: IncrementLaw::critical(-2.0).unwrap(),
            env,
            seed: 2024,
        }
    }

    #[test]
    fn h_beta_closed_forms() {
        let law = IncrementLaw::critical(-2.0).unwrap();
        let h0 = h_beta(&law, &EnvironmentLaw::Gaussian, 0.0).unwrap();
        assert_eq!(h0.value, -law.entropy(ENTROPY_TOL).unwrap().value().unwrap());
        let mut prev = h0.value;
        for i in 1..40 {
            let h = h_beta(&law, &EnvironmentLaw::Gaussian, i as f64 * 0.1).unwrap().value;
            assert!(h > prev);
            prev = h;
        }
        let root = (2.0 * h0.entropy).sqrt();
        assert!(h_beta(&law, &EnvironmentLaw::Gaussian, root).unwrap().value.abs() < 1e-12);
        let divergent = IncrementLaw::critical(0.0).unwrap();
        assert!(matches!(
            h_beta(&divergent, &EnvironmentLaw::Gaussian, 1.0),
            Err(Error::DivergentEntropy { .. })
        ));
    }

    #[test]
    fn nearest_neighbor_slope_at_beta_zero() {
        let nn = IncrementLaw::nearest_neighbor(0.0).unwrap();
        let est = lln_slope_check(&nn, &EnvironmentLaw::Gaussian, 0.0, 100, 10, 1).unwrap();
        assert_eq!(est.mean, -std::f64::consts::LN_2);
    }

    #[test]
    fn slope_stderr_scales_like_root_count() {
        let law = IncrementLaw::critical(-3.0).unwrap();
        let env = EnvironmentLaw::Gaussian;
        let small = lln_slope_check(&law, &env, 1.0, 1000, 10, 5).unwrap();
        let large = lln_slope_check(&law, &env, 1.0, 1000, 40, 6).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!(ratio > 1.0 && ratio < 4.0, "{ratio}");
    }

    #[test]
    fn beta_zero_size_bias_is_trivial() {
        let cfg = config(0.0, 6, 5, EnvironmentLaw::Gaussian);
        assert!(size_biased_w(&cfg, 20).unwrap().iter().all(|w| *w == 1.0));
        let report = birkner_detector(&cfg, &[2, 6], &[0.5, 1.0, 2.0], 20).unwrap();
        for row in &report.rows {
            assert_eq!(row.fraction, if row.level <= 1.0 { 1.0 } else { 0.0 });
        }
        assert!(report.trends.iter().all(|t| t.trend == Trend::Inconclusive));
    }

    /// Configuration law of the size-biased construction versus `W dP`,
    /// both by exhaustive enumeration of the 2^6 environments.
    #[test]
    fn construction_matches_direct_size_biasing() {
        let env = EnvironmentLaw::bernoulli(0.35).unwrap();
        let beta = 1.1;
        let cfg = config(beta, 2, 1, env.clone());
        let kernel = WindowKernel::new(&cfg.law, 1).unwrap();
        let base = LatticeField::new(0, env.clone());
        let tilted = env.tilted_atoms(beta).unwrap();
        let atoms = env.atoms().unwrap();
        let sites: Vec<(u64, i64)> = (1..=2).flat_map(|n| (-1..=1).map(move |z| (n, z))).collect();
        let mut tv = 0.0;
        for code in 0..(1u32 << sites.len()) {
            let bits: Vec<usize> = (0..sites.len()).map(|s| ((code >> s) & 1) as usize).collect();
            let values: Vec<((u64, i64), f64)> =
                sites.iter().zip(&bits).map(|(s, b)| (*s, atoms[*b].0)).collect();
            let prior: f64 = bits.iter().map(|b| atoms[*b].1).product();
            let field = base.with_sites(&values);
            let w = exact_w_with(&kernel, beta, 2, &field).w[1];
            let direct = prior * w;
            let mut built = 0.0;
            for s1 in -1i64..=1 {
                for s2 in -1i64..=1 {
                    let p_path = kernel.folded(s1) * kernel.folded(s2 - s1);
                    let mut p_env = 1.0;
                    for (site, b) in sites.iter().zip(&bits) {
                        let on_path = (site.0 == 1 && site.1 == s1) || (site.0 == 2 && site.1 == s2);
                        p_env *= if on_path { tilted[*b].1 } else { atoms[*b].1 };
                    }
                    built += p_path * p_env;
                }
            }
            tv += 0.5 * (direct - built).abs();
        }
        assert!(tv <= 1e-9, "{tv}");
    }

    #[test]
    fn inverse_w_has_unit_mean() {
        let cfg = config(0.5, 8, 8, EnvironmentLaw::Gaussian);
        let acc: Accumulator = size_biased_w(&cfg, 2000).unwrap().iter().map(|w| 1.0 / w).collect();
        let est = acc.estimate();
        assert!((est.mean - 1.0).abs() <= 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn overlay_marginals() {
        let beta = 1.5;
        let cfg = config(beta, 4, 6, EnvironmentLaw::Gaussian);
        let all = runs(&cfg, 3000).unwrap();
        let mut on_path: Vec<f64> = all.iter().map(|r| r.tilted[2]).collect();
        let d = ks_statistic(&mut on_path, |x| EnvironmentLaw::Gaussian.tilted_cdf(beta, x));
        assert!(d < ks_critical_1pct(on_path.len()), "{d}");
        let mut off: Vec<f64> = all
            .iter()
            .enumerate()
            .map(|(r, run)| {
                let z = cfg.field(r as u64);
                let other = if run.path[2] == 0 { 1 } else { 0 };
                z.with_path_overlay(&run.path, &run.tilted).unwrap().value(3, other)
            })
            .collect();
        let d = ks_statistic(&mut off, |x| EnvironmentLaw::Gaussian.cdf(x));
        assert!(d < ks_critical_1pct(off.len()), "{d}");
    }
}
