//! Rectangle coarse-graining for the weak-disorder lower bound.
//!
//! Rectangle `R_{i,j}` covers rows `iN+1..=(i+1)N` and positions
//! `2jN² + s`, `|s| ≤ N² - 1`. The restricted partition function runs the
//! walk from the rectangle's bottom centre, keeps it inside for `N - 1` steps
//! and pins it back at the centre, normalised by the probability of that
//! event at `β = 0`.

use std::f64::consts::PI;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::lattice_field::LatticeField;
use crate::rng::{derive_seed, open_unit, replica_rng, Stream};
use crate::stats::{proportion, Accumulator, Estimate};
use crate::walk_laws::{Family, IncrementLaw};

/// Upper end of the grid searched for `C(L, ε)`.
const SV_GRID_END: f64 = 1e9;
/// Below this every integer is inspected.
const SV_EXACT_END: u64 = 100_000;
const SV_LOG_POINTS: usize = 20_000;

/// Confined kernel on one rectangle.
#[derive(Clone, Debug)]
pub struct RectangleKernel {
    n: usize,
    half: usize,
    /// `K(d)` for `d ∈ [-(W-1), W-1]`, stored at `d + W - 1`.
    kfull: Vec<f64>,
    p_an: f64,
    p_stay: f64,
}

impl RectangleKernel {
    pub fn new(law: &IncrementLaw, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("rectangle scale N must be >= 2"));
        }
        let half = n * n - 1;
        let width = 2 * half + 1;
        let kfull = (0..2 * width - 1)
            .map(|i| law.pmf(i as i64 - (width as i64 - 1)))
            .collect();
        let mut k = RectangleKernel {
            n,
            half,
            kfull,
            p_an: 0.0,
            p_stay: 0.0,
        };
        let (last, log_scale) = k.propagate(|_, _| 1.0, true);
        k.p_stay = last.iter().sum::<f64>() * log_scale.exp();
        k.p_an = last[half] * log_scale.exp();
        if !(k.p_an > 0.0) {
            return Err(Error::Incompatible(format!(
                "P[A_N] = 0 for N = {n}; the walk cannot return to the centre in N - 1 steps"
            )));
        }
        Ok(k)
    }

    pub fn scale(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        2 * self.half + 1
    }

    /// `P[A_N]` at `β = 0`.
    pub fn p_an(&self) -> f64 {
        self.p_an
    }

    /// Probability of staying inside for `N - 1` steps, any endpoint.
    pub fn p_stay(&self) -> f64 {
        self.p_stay
    }

    /// Runs `B_k(s) = w(k, s) Σ_{s'} B_{k-1}(s') K(s - s')` for
    /// `k = 1..N-1` from `B_0 = w(0, 0) δ_0`. With `full_last` unset only the
    /// centre entry of the final row is computed. Rows are rescaled by their
    /// maximum; the second value is the accumulated log factor.
    fn propagate(&self, weight: impl Fn(usize, usize) -> f64, full_last: bool) -> (Vec<f64>, f64) {
        let w = self.width();
        let mut cur = vec![0.0; w];
        cur[self.half] = weight(0, self.half);
        let mut next = vec![0.0; w];
        let mut log_scale = 0.0;
        for k in 1..self.n {
            let last = k == self.n - 1;
            for (s, slot) in next.iter_mut().enumerate() {
                if last && !full_last && s != self.half {
                    *slot = 0.0;
                    continue;
                }
                // K is symmetric, so K(s - s') = kfull[s' - s + W - 1].
                *slot = weight(k, s) * dot(&cur, &self.kfull[w - 1 - s..2 * w - 1 - s]);
            }
            let top = next.iter().copied().fold(0.0, f64::max);
            if top > 0.0 && !last {
                log_scale += top.ln();
                next.iter_mut().for_each(|x| *x /= top);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        (cur, log_scale)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// `W̃` on rectangle `R_{i,j}`.
pub fn restricted_w(field: &LatticeField, kernel: &RectangleKernel, beta: f64, i: u64, j: i64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let n = kernel.n as u64;
    let lambda = field.env().lambda(beta);
    let z0 = 2 * j * (kernel.n * kernel.n) as i64 - kernel.half as i64;
    let mut rows = vec![0.0; kernel.n * kernel.width()];
    for (k, row) in rows.chunks_exact_mut(kernel.width()).enumerate() {
        field.row(i * n + k as u64 + 1, z0, row);
        row.iter_mut().for_each(|x| *x = (beta * *x - lambda).exp());
    }
    let width = kernel.width();
    let (last, log_scale) = kernel.propagate(|k, s| rows[k * width + s], false);
    (last[kernel.half].ln() + log_scale - kernel.p_an.ln()).exp()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnProbability {
    pub n: usize,
    pub p_an: f64,
    /// `ln P[A_N] / N`.
    pub rate: f64,
    pub p_stay: f64,
}

pub fn a_n_probability(law: &IncrementLaw, n: usize) -> Result<AnProbability> {
    let k = RectangleKernel::new(law, n)?;
    Ok(AnProbability {
        n,
        p_an: k.p_an,
        rate: k.p_an.ln() / n as f64,
        p_stay: k.p_stay,
    })
}

/// Result of the dyadic level search and its re-verification.
#[derive(Clone, Debug, Serialize)]
pub struct GoodRectangleStats {
    pub n: usize,
    pub beta: f64,
    /// `η = 2^{n0 - 1}`.
    pub eta: f64,
    pub n0: u32,
    /// `P̂[W̃ ≥ η]` on the search sample.
    pub p_eta: f64,
    pub p_eta_stderr: f64,
    pub samples: usize,
    /// `P̂[W̃ ≥ η]` on the independent verification sample.
    pub verify_p_eta: f64,
    pub verify_stderr: f64,
    pub inequality_verified: bool,
    /// `(3/π²) 2^{-n0} / (n0 + 1)²`.
    pub lemma_bound: f64,
    pub lemma_ok: bool,
    pub mean_w: Estimate,
    pub second_moment: Estimate,
    /// `exp((λ(2β) - 2λ(β)) N)`.
    pub second_moment_ceiling: f64,
    pub second_moment_ok: bool,
    /// `Σ_n 2^n P̂[W̃ ≥ 2^{n-1}]`.
    pub pgood_sum: f64,
    pub pgood_ok: bool,
    pub mean_ok: bool,
}

impl GoodRectangleStats {
    pub fn all_ok(&self) -> bool {
        self.inequality_verified && self.lemma_ok && self.second_moment_ok && self.pgood_ok && self.mean_ok
    }
}

fn lemma_target(level: u32) -> f64 {
    3.0 / (PI * PI) / ((level + 1) as f64).powi(2)
}

fn tail_fraction(sorted: &[f64], threshold: f64) -> f64 {
    let below = sorted.partition_point(|w| *w < threshold);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// Draws `W̃` on `R_{i,0}` for `i ∈ [0, S)`, picks the smallest level `n0`
/// with `(3/π²)(n0+1)^{-2} ≤ 2^{n0} P̂[W̃ ≥ 2^{n0-1}]`, then re-checks it and
/// the moment bounds on `i ∈ [S, 2S)`.
pub fn dyadic_eta_search(
    law: &IncrementLaw,
    env: &EnvironmentLaw,
    beta: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<GoodRectangleStats> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta must be finite and >= 0"));
    }
    env.validate()?;
    let kernel = RectangleKernel::new(law, n)?;
    let field = LatticeField::new(derive_seed(seed, Stream::Field, 0), env.clone());
    let draw = |range: std::ops::Range<u64>| -> Vec<f64> {
        range
            .into_par_iter()
            .map(|i| restricted_w(&field, &kernel, beta, i, 0))
            .collect()
    };
    let s = samples as u64;
    let mut search = draw(0..s);
    let verify = draw(s..2 * s);
    if search.iter().chain(&verify).any(|w| !w.is_finite()) {
        return Err(Error::Numerical("restricted partition function overflowed".into()));
    }
    search.sort_by(f64::total_cmp);
    let max = search[search.len() - 1];

    let mut n0 = 0u32;
    let p_eta = loop {
        let threshold = 2f64.powi(n0 as i32 - 1);
        if threshold > max {
            return Err(Error::Numerical(format!(
                "no dyadic level satisfies the inequality below the sample maximum {max}"
            )));
        }
        let p = tail_fraction(&search, threshold);
        if lemma_target(n0) <= 2f64.powi(n0 as i32) * p {
            break p;
        }
        n0 += 1;
    };
    let eta = 2f64.powi(n0 as i32 - 1);
    let se = proportion((p_eta * samples as f64).round() as usize, samples).stderr;

    let hits = verify.iter().filter(|w| **w >= eta).count();
    let v = proportion(hits, samples);
    let inequality_verified = lemma_target(n0) <= 2f64.powi(n0 as i32) * (v.mean + 3.0 * v.stderr);
    let lemma_bound = lemma_target(n0) * 2f64.powi(-(n0 as i32));
    let lemma_ok = v.mean >= lemma_bound - 3.0 * v.stderr;

    let mean_w: Accumulator = search.iter().chain(&verify).copied().collect();
    let mean_w = mean_w.estimate();
    let second: Accumulator = search.iter().chain(&verify).map(|w| w * w).collect();
    let second_moment = second.estimate();
    let ceiling = ((env.lambda(2.0 * beta) - 2.0 * env.lambda(beta)) * n as f64).exp();
    let second_moment_ok = second_moment.mean <= ceiling + 4.0 * second_moment.stderr;

    let mut pgood_sum = 0.0;
    let mut level = 0i32;
    loop {
        let threshold = 2f64.powi(level - 1);
        if threshold > max {
            break;
        }
        pgood_sum += 2f64.powi(level) * tail_fraction(&search, threshold);
        level += 1;
    }
    let big_mass = search.iter().filter(|w| **w >= 0.5).sum::<f64>() / samples as f64;
    let pgood_ok = pgood_sum >= 0.5 && pgood_sum >= big_mass;
    let mean_ok = (mean_w.mean - 1.0).abs() <= 3.0 * mean_w.stderr.max(f64::EPSILON);

    Ok(GoodRectangleStats {
        n,
        beta,
        eta,
        n0,
        p_eta,
        p_eta_stderr: se,
        samples,
        verify_p_eta: v.mean,
        verify_stderr: v.stderr,
        inequality_verified,
        lemma_bound,
        lemma_ok,
        mean_w,
        second_moment,
        second_moment_ceiling: ceiling,
        second_moment_ok,
        pgood_sum,
        pgood_ok,
        mean_ok,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeometricGap {
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `E[J_0] = 1/p` for the first good index `J_0 ≥ 1`.
    pub expected: f64,
    /// The looser `1/p + 1` used in the bound.
    pub upper: f64,
}

/// Index of the first success in i.i.d. Bernoulli(`p`) trials, by inversion.
fn first_success<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if p == 1.0 {
        return 1.0;
    }
    (open_unit(rng).ln() / (-p).ln_1p()).ceil().max(1.0)
}

pub fn geometric_gap_check(p: f64, trials: usize, seed: u64) -> Result<GeometricGap> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p = {p} must lie in (0, 1]")));
    }
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let mut rng = replica_rng(seed, Stream::Geometric, 0);
    let acc: Accumulator = (0..trials).map(|_| first_success(p, &mut rng)).collect();
    let est = acc.estimate();
    Ok(GeometricGap {
        p,
        mean: est.mean,
        stderr: est.stderr,
        expected: 1.0 / p,
        upper: 1.0 / p + 1.0,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlowlyVarying {
    pub epsilon: f64,
    /// `C(L, ε) = inf_x x^{1+ε} K(x)` over the inspected range.
    pub constant: f64,
    /// Argmin; past it `x^ε L(x)` no longer dips below the constant.
    pub onset: u64,
}

/// `C(L, ε)` with `L(x) = x K(x)`: every integer up to 1e5, then a
/// logarithmic grid to 1e9.
pub fn slowly_varying_constant(law: &IncrementLaw, epsilon: f64) -> Result<SlowlyVarying> {
    if law.family() == Family::NearestNeighbor {
        return Err(Error::Incompatible("nearest-neighbour kernel has no slowly varying tail".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let f = |x: u64| (1.0 + epsilon) * (x as f64).ln() + law.ln_pmf(x as i64);
    let mut best = (f64::INFINITY, 1u64);
    let mut consider = |x: u64| {
        let v = f(x);
        if v < best.0 {
            best = (v, x);
        }
    };
    (1..=SV_EXACT_END).for_each(&mut consider);
    let ratio = (SV_GRID_END / SV_EXACT_END as f64).ln() / SV_LOG_POINTS as f64;
    for k in 1..=SV_LOG_POINTS {
        consider((SV_EXACT_END as f64 * (ratio * k as f64).exp()).round() as u64);
    }
    Ok(SlowlyVarying {
        epsilon,
        constant: best.0.exp(),
        onset: best.1,
    })
}

/// `(1/N) ln[ η · C/(2N²)^{1+ε} · (1/p + 1)^{-(1+ε)} · P[A_N] ]`.
pub fn lower_bound_assembly(
    n: usize,
    epsilon: f64,
    eta: f64,
    p_eta: f64,
    p_an: f64,
    c: f64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("N must be >= 1"));
    }
    for (name, v) in [("eta", eta), ("p_eta", p_eta), ("P[A_N]", p_an), ("C", c), ("epsilon", epsilon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} = {v} must be positive and finite")));
        }
    }
    if p_eta > 1.0 || p_an > 1.0 {
        return Err(Error::invalid("probabilities must not exceed one"));
    }
    let nf = n as f64;
    let ln_rect = (c / (2.0 * nf * nf).powf(1.0 + epsilon)).ln();
    Ok(eta.ln() / nf + ln_rect / nf - (1.0 + epsilon) / nf * (1.0 / p_eta + 1.0).ln() + p_an.ln() / nf)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseGrainRow {
    pub n: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub n0: u32,
    pub p_eta: f64,
    pub p_eta_stderr: f64,
    pub p_an: f64,
    pub c_l_eps: f64,
    pub onset: u64,
    pub bound: f64,
    pub checks_ok: bool,
}

/// Search, constant and assembly for one N. The bound is a lower bound on a
/// quantity that is at most zero, so a positive value is a contract violation.
pub fn coarse_grain_bound(
    law: &IncrementLaw,
    env: &EnvironmentLaw,
    beta: f64,
    n: usize,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<CoarseGrainRow> {
    let stats = dyadic_eta_search(law, env, beta, n, samples, seed)?;
    let sv = slowly_varying_constant(law, epsilon)?;
    let p_an = RectangleKernel::new(law, n)?.p_an;
    let bound = lower_bound_assembly(n, epsilon, stats.eta, stats.p_eta, p_an, sv.constant)?;
    if bound > 0.0 {
        return Err(Error::contract(format!("free-energy lower bound {bound} > 0 at N = {n}")));
    }
    Ok(CoarseGrainRow {
        n,
        beta,
        epsilon,
        eta: stats.eta,
        n0: stats.n0,
        p_eta: stats.p_eta,
        p_eta_stderr: stats.p_eta_stderr,
        p_an,
        c_l_eps: sv.constant,
        onset: sv.onset,
        bound,
        checks_ok: stats.all_ok(),
    })
}
