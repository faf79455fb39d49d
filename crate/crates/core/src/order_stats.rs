//! Extreme-order statistics of heavy-tailed increments in log-magnitude space.
//!
//! Magnitudes are generated as `|X_i| = F^{-1}(1 - q_i)` from upper-tail
//! uniforms `q_i`, so the largest magnitude belongs to the smallest `q`. Only
//! the two smallest `q` values are tracked; quantiles are evaluated at the
//! square checkpoints `k²`.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logmag::LogMagnitude;
use crate::rng::{open_unit, replica_rng, Stream};
use crate::stats::{proportion, Estimate};
use crate::walk_laws::IncrementLaw;

/// Largest and second-largest magnitudes among the first `n` increments.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtremeRecord {
    pub n: u64,
    pub max1: LogMagnitude,
    pub max2: LogMagnitude,
    /// `max1 > K^n`.
    pub b: bool,
    /// `max2 ≤ max1 / (2n)`.
    pub c: bool,
    /// At most one second-maximum update strictly between `n = k²` and
    /// `(k+1)²`; `None` when that window runs past the sample.
    pub d: Option<bool>,
}

fn ln_or_neg_inf(x: &LogMagnitude) -> f64 {
    if x.is_zero() {
        f64::NEG_INFINITY
    } else {
        x.lnmag()
    }
}

/// `x > K^n`, exact when `K` is an integer and `K^n` fits in a `u64`.
fn exceeds_power(x: &LogMagnitude, k: f64, n: u64) -> bool {
    if x.is_zero() {
        return false;
    }
    if k.fract() == 0.0 && k >= 1.0 {
        if let (Some(v), Ok(e)) = (x.exact_abs(), u32::try_from(n)) {
            if let Some(p) = (k as u64).checked_pow(e) {
                return v > p;
            }
        }
    }
    x.lnmag() > n as f64 * k.ln()
}

/// `max2 ≤ max1 / (2n)` in logs.
fn event_c(max1: &LogMagnitude, max2: &LogMagnitude, n: u64) -> bool {
    if max2.is_zero() {
        return true;
    }
    if max1.is_zero() {
        return false;
    }
    if let (Some(a), Some(b)) = (max1.exact_abs(), max2.exact_abs()) {
        return (b as u128) * 2 * n as u128 <= a as u128;
    }
    max2.lnmag() <= max1.lnmag() - (2.0 * n as f64).ln()
}

/// `ln max1 + ln(1 - (n-1) max2/max1) ≥ ln max1 - ln 2`, the lower bound on
/// `|S_n|` used under C.
fn chain_holds(max1: &LogMagnitude, max2: &LogMagnitude, n: u64) -> bool {
    if max2.is_zero() {
        return true;
    }
    let l1 = ln_or_neg_inf(max1);
    let l2 = ln_or_neg_inf(max2);
    let frac = (n as f64 - 1.0) * (l2 - l1).exp();
    if frac >= 1.0 {
        return false;
    }
    l1 + (-frac).ln_1p() >= l1 - std::f64::consts::LN_2 - 1e-12
}

/// Smallest and second-smallest upper-tail uniforms of one stream.
struct TwoSmallest {
    q1: f64,
    q2: f64,
}

impl TwoSmallest {
    fn new() -> Self {
        TwoSmallest {
            q1: 1.0,
            q2: 1.0,
        }
    }

    /// Inserts `q`; reports whether the second maximum changed.
    fn push(&mut self, q: f64) -> bool {
        if q < self.q1 {
            self.q2 = self.q1;
            self.q1 = q;
            true
        } else if q < self.q2 {
            self.q2 = q;
            true
        } else {
            false
        }
    }
}

fn magnitude(law: &IncrementLaw, q: f64) -> LogMagnitude {
    if q >= 1.0 {
        LogMagnitude::ZERO
    } else {
        law.quantile_upper(q).expect("q in (0, 1)")
    }
}

fn checkpoints(n_max: u64) -> Vec<u64> {
    (2u64..).map(|k| k * k).take_while(|n| *n <= n_max).collect()
}

/// Checkpoint records of one replica.
pub fn extreme_records(law: &IncrementLaw, n_max: u64, k: f64, seed: u64, replica: u64) -> Vec<ExtremeRecord> {
    let mut rng = replica_rng(seed, Stream::Extremes, replica);
    records_from(law, n_max, k, || open_unit(&mut rng))
}

fn records_from(law: &IncrementLaw, n_max: u64, k: f64, mut draw: impl FnMut() -> f64) -> Vec<ExtremeRecord> {
    let cps = checkpoints(n_max);
    let mut out: Vec<ExtremeRecord> = Vec::with_capacity(cps.len());
    let mut state = TwoSmallest::new();
    let mut t = 0u64;
    let mut window_updates = 0u32;
    for (idx, &n) in cps.iter().enumerate() {
        while t < n {
            t += 1;
            let changed = state.push(draw());
            let prev = if idx > 0 { cps[idx - 1] } else { 0 };
            if changed && idx > 0 && t > prev && t < n {
                window_updates += 1;
            }
        }
        if idx > 0 {
            out[idx - 1].d = Some(window_updates <= 1);
        }
        window_updates = 0;
        let max1 = magnitude(law, state.q1);
        let max2 = magnitude(law, state.q2);
        out.push(ExtremeRecord {
            n,
            max1,
            max2,
            b: exceeds_power(&max1, k, n),
            c: event_c(&max1, &max2, n),
            d: None,
        });
    }
    // Finish the last window when the sample extends into it.
    if let Some(last) = out.last_mut() {
        let k_root = (last.n as f64).sqrt().round() as u64;
        let next = (k_root + 1) * (k_root + 1);
        if n_max >= next - 1 {
            while t < next - 1 {
                t += 1;
                if state.push(draw()) {
                    window_updates += 1;
                }
            }
            last.d = Some(window_updates <= 1);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CheckpointRow {
    pub n: u64,
    pub freq_b: f64,
    pub freq_c: f64,
    /// `NaN` when the D window is incomplete.
    pub freq_d: f64,
    /// Replicas where C holds but the `|S_n| ≥ max1/2` chain fails.
    pub chain_failures: usize,
    pub replicas: usize,
}

/// Frequencies of B, C and D at every checkpoint `k² ≤ n_max`.
pub fn run_extremes(law: &IncrementLaw, n_max: u64, k: f64, replicas: usize, seed: u64) -> Result<Vec<CheckpointRow>> {
    if n_max < 4 {
        return Err(Error::invalid("n_max must be at least 4"));
    }
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::invalid(format!("K = {k} must be finite and >= 1")));
    }
    if replicas == 0 {
        return Err(Error::invalid("need at least one replica"));
    }
    let all: Vec<Vec<ExtremeRecord>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| extreme_records(law, n_max, k, seed, r))
        .collect();
    let rows = (0..all[0].len())
        .map(|i| {
            let at = |f: &dyn Fn(&ExtremeRecord) -> bool| all.iter().filter(|recs| f(&recs[i])).count();
            let r = replicas as f64;
            let d_known = all.iter().filter(|recs| recs[i].d.is_some()).count();
            CheckpointRow {
                n: all[0][i].n,
                freq_b: at(&|e| e.b) as f64 / r,
                freq_c: at(&|e| e.c) as f64 / r,
                freq_d: if d_known == replicas {
                    at(&|e| e.d == Some(true)) as f64 / r
                } else {
                    f64::NAN
                },
                chain_failures: at(&|e| e.c && !chain_holds(&e.max1, &e.max2, e.n)),
                replicas,
            }
        })
        .collect();
    Ok(rows)
}

/// `P[max_{i ≤ n} |X_i| ≤ x] = (1 - P[|X| > x])^n` with `x` given as `ln x`;
/// exact for integer `x ≤ 1e9`, continuum tail beyond.
pub fn prob_max_at_most(law: &IncrementLaw, n: u64, ln_x: f64) -> f64 {
    let exceed = if ln_x <= 1e9f64.ln() {
        law.abs_exceed(ln_x.exp().floor() as u64)
    } else {
        (2.0 * law.tail_at_ln(ln_x)).min(1.0)
    };
    (n as f64 * (-exceed).ln_1p()).exp()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TauIdentity {
    pub n: u64,
    pub freq: f64,
    pub stderr: f64,
    /// `2 / (n² + 1)`.
    pub target: f64,
    pub replicas: usize,
}

/// Frequency of `U_{n²+1}` exceeding the second largest of `U_1..U_{n²}`.
pub fn uniform_tau_identity(n: u64, replicas: usize, seed: u64) -> Result<TauIdentity> {
    if n < 2 {
        return Err(Error::invalid("n must be >= 2"));
    }
    if replicas < 10_000 {
        return Err(Error::invalid("need at least 10^4 replicas"));
    }
    let m = n * n;
    let hits = (0..replicas as u64)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = replica_rng(seed, Stream::Uniforms, r);
            let (mut top, mut second) = (0.0f64, 0.0f64);
            for _ in 0..m {
                let u = (rng.next_u64() >> 11) as f64;
                if u > top {
                    second = top;
                    top = u;
                } else if u > second {
                    second = u;
                }
            }
            ((rng.next_u64() >> 11) as f64) > second
        })
        .count();
    let est: Estimate = proportion(hits, replicas);
    Ok(TauIdentity {
        n,
        freq: est.mean,
        stderr: est.stderr,
        target: 2.0 / (m as f64 + 1.0),
        replicas,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionCheck {
    pub n_steps: usize,
    pub radius: u64,
    pub is_unimodal: bool,
    /// `max_{x ≠ 0} P[S_n = x] |x|`.
    pub max_ratio: f64,
    pub passes: bool,
    pub mass: f64,
}

/// Exact `n`-fold convolution of the law truncated to `[-R, R]` and
/// renormalised; checks unimodality and `P[S_n = x] ≤ 1/|x|`.
pub fn unimodal_convolution_check(law: &IncrementLaw, n_steps: usize, radius: u64) -> Result<ConvolutionCheck> {
    Ok(convolve(law, n_steps, radius)?.0)
}

/// The check together with the full pmf of `S_n`, indexed by `x + nR`.
pub fn convolve(law: &IncrementLaw, n_steps: usize, radius: u64) -> Result<(ConvolutionCheck, Vec<f64>)> {
    if n_steps < 1 || radius < 1 {
        return Err(Error::invalid("need n_steps >= 1 and R >= 1"));
    }
    let r = radius as usize;
    let raw: Vec<f64> = (0..=r).map(|x| law.pmf(x as i64)).collect();
    if raw.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("truncated law is not unimodal"));
    }
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    let half: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let base = mirror(&half);
    let mut cur = base.clone();
    for k in 2..=n_steps {
        let prev_r = (k - 1) * r;
        let new_r = k * r;
        let mut next_half = vec![0.0; new_r + 1];
        for (x, slot) in next_half.iter_mut().enumerate() {
            // Σ_y p(y) cur(x + y), y ∈ [-R, R], cur indexed by z + prev_r.
            let lo = (x as i64 - r as i64).max(-(prev_r as i64));
            let hi = (x as i64 + r as i64).min(prev_r as i64);
            if lo > hi {
                continue;
            }
            let c = &cur[(lo + prev_r as i64) as usize..=(hi + prev_r as i64) as usize];
            let b = &base[(lo - x as i64 + r as i64) as usize..=(hi - x as i64 + r as i64) as usize];
            *slot = c.iter().zip(b).map(|(u, v)| u * v).sum();
        }
        cur = mirror(&next_half);
    }
    let top = n_steps * r;
    let is_unimodal = cur[top..].windows(2).all(|w| w[1] <= w[0]);
    let max_ratio = cur[top + 1..]
        .iter()
        .enumerate()
        .map(|(i, p)| p * (i + 1) as f64)
        .fold(0.0, f64::max);
    let mut sorted = cur.clone();
    sorted.sort_by(f64::total_cmp);
    let mass = sorted.iter().sum();
    Ok((
        ConvolutionCheck {
            n_steps,
            radius,
            is_unimodal,
            max_ratio,
            passes: is_unimodal && max_ratio <= 1.0 + 1e-12,
            mass,
        },
        cur,
    ))
}

fn mirror(half: &[f64]) -> Vec<f64> {
    half[1..].iter().rev().chain(half).copied().collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthWitness {
    pub k: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub fraction: f64,
    pub stderr: f64,
    /// Median first checkpoint from which the chain holds through `n_max`.
    pub median_onset: Option<u64>,
    pub replicas: usize,
}

/// Fraction of replicas with `max1 > 2K^n` and C at every checkpoint in
/// `[n_min, n_max]`.
pub fn growth_witness(
    law: &IncrementLaw,
    k: f64,
    n_max: u64,
    n_min: Option<u64>,
    replicas: usize,
    seed: u64,
) -> Result<GrowthWitness> {
    if n_max < 4 || replicas == 0 {
        return Err(Error::invalid("need n_max >= 4 and at least one replica"));
    }
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::invalid(format!("K = {k} must be finite and >= 1")));
    }
    let n_min = n_min.unwrap_or(n_max / 4);
    let ln_k = k.ln();
    let results: Vec<(bool, Option<u64>)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let recs = extreme_records(law, n_max, k, seed, r);
            let holds: Vec<bool> = recs
                .iter()
                .map(|e| e.c && ln_or_neg_inf(&e.max1) > std::f64::consts::LN_2 + e.n as f64 * ln_k)
                .collect();
            let all = recs.iter().zip(&holds).filter(|(e, _)| e.n >= n_min).all(|(_, h)| *h);
            let tail_start = holds.iter().rposition(|h| !h).map_or(0, |i| i + 1);
            (all, recs.get(tail_start).map(|e| e.n))
        })
        .collect();
    let hits = results.iter().filter(|(a, _)| *a).count();
    let mut onsets: Vec<u64> = results.iter().filter_map(|(_, o)| *o).collect();
    onsets.sort_unstable();
    let est = proportion(hits, replicas);
    Ok(GrowthWitness {
        k,
        n_min,
        n_max,
        fraction: est.mean,
        stderr: est.stderr,
        median_onset: onsets.get(onsets.len() / 2).copied(),
        replicas,
    })
}
