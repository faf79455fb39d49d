//! Exact partition functions on a finite spatial window.
//!
//! The window `[-M, M]` is closed into a ring of `L = 2M + 1` sites and the
//! walk uses the kernel `K_M(j) ∝ K(j) 1{|j| ≤ 2M}` with positions taken
//! modulo `L`. Each row therefore conserves walk mass exactly, so `E W_N = 1`
//! and the martingale property hold for the windowed model without
//! correction terms. The discarded mass `P[|X| > 2M]` is reported as
//! `mass_loss`.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::lattice_field::LatticeField;
use crate::rng::{derive_seed, open_unit, Stream};
use crate::stats::{Accumulator, Estimate};
use crate::walk_laws::IncrementLaw;

/// Largest row count for which disorder enumeration is attempted.
const MAX_ENUMERATION_TERMS: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct PolymerConfig {
    pub beta: f64,
    /// Horizon `N`.
    pub horizon: usize,
    /// Window half-width `M`.
    pub half_width: usize,
    pub law: IncrementLaw,
    pub env: EnvironmentLaw,
    pub seed: u64,
}

impl PolymerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon N must be >= 1"));
        }
        if self.half_width < 1 {
            return Err(Error::invalid("window half-width M must be >= 1"));
        }
        self.env.validate()
    }

    /// Disorder realization of replica `r`.
    pub fn field(&self, replica: u64) -> LatticeField {
        LatticeField::new(derive_seed(self.seed, Stream::Field, replica), self.env.clone())
    }
}

/// Output of one exact DP run.
#[derive(Clone, Debug, Serialize)]
pub struct WTrajectory {
    /// `W_n`, `n = 1..=N` (may overflow to infinity; `log_w` does not).
    pub w: Vec<f64>,
    pub log_w: Vec<f64>,
    /// `ln Z_n = ln W_n + n λ(β)`.
    pub log_z: Vec<f64>,
    pub mass_loss: f64,
}

/// Jump kernel of the windowed walk.
#[derive(Clone, Debug)]
pub struct WindowKernel {
    half_width: usize,
    /// `K_M(j)` at index `j + 2M`.
    truncated: Vec<f64>,
    /// Step probability by residue `d ∈ [0, L)`.
    folded: Vec<f64>,
    cumulative: Vec<f64>,
    mass_loss: f64,
}

impl WindowKernel {
    pub fn new(law: &IncrementLaw, half_width: usize) -> Result<Self> {
        if half_width < 1 {
            return Err(Error::invalid("window half-width M must be >= 1"));
        }
        let m = half_width as i64;
        let len = 2 * half_width + 1;
        let raw: Vec<f64> = (-2 * m..=2 * m).map(|j| law.pmf(j)).collect();
        let total: f64 = sorted_sum(&raw);
        let truncated: Vec<f64> = raw.iter().map(|k| k / total).collect();
        let at = |j: i64| truncated[(j + 2 * m) as usize];
        let folded: Vec<f64> = (0..len as i64)
            .map(|d| {
                let r = if d <= m { d } else { d - len as i64 };
                if r == 0 {
                    at(0)
                } else {
                    at(r) + at(r - r.signum() * len as i64)
                }
            })
            .collect();
        let mut cumulative = Vec::with_capacity(len);
        let mut acc = 0.0;
        for p in &folded {
            acc += p;
            cumulative.push(acc);
        }
        Ok(WindowKernel {
            half_width,
            truncated,
            folded,
            cumulative,
            mass_loss: law.abs_exceed(2 * half_width as u64),
        })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Ring size `L = 2M + 1`.
    pub fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn mass_loss(&self) -> f64 {
        self.mass_loss
    }

    /// `K_M(j)`; zero for `|j| > 2M`.
    pub fn truncated(&self, j: i64) -> f64 {
        let m = 2 * self.half_width as i64;
        if j.abs() > m {
            0.0
        } else {
            self.truncated[(j + m) as usize]
        }
    }

    /// Probability of a step congruent to `r` modulo `L`.
    pub fn folded(&self, r: i64) -> f64 {
        self.folded[r.rem_euclid(self.width() as i64) as usize]
    }

    /// Maps any integer to its representative in `[-M, M]`.
    pub fn wrap(&self, z: i64) -> i64 {
        let m = self.half_width as i64;
        (z + m).rem_euclid(self.width() as i64) - m
    }

    /// A step residue in `[-M, M]` drawn from the folded kernel.
    pub fn sample_step<R: RngCore + ?Sized>(&self, rng: &mut R) -> i64 {
        let u = open_unit(rng) * self.cumulative[self.cumulative.len() - 1];
        let d = self.cumulative.partition_point(|c| *c <= u).min(self.width() - 1) as i64;
        self.wrap(d)
    }

    /// `next[i] = Σ_d folded[d] prev[(i - d) mod L]`.
    pub fn step(&self, prev: &[f64], next: &mut [f64]) {
        let len = self.width();
        next.iter_mut().for_each(|x| *x = 0.0);
        for (d, &k) in self.folded.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            for (o, p) in next[d..].iter_mut().zip(&prev[..len - d]) {
                *o += k * p;
            }
            for (o, p) in next[..d].iter_mut().zip(&prev[len - d..]) {
                *o += k * p;
            }
        }
    }
}

fn sorted_sum(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Exact `W_n` for `n = 1..=N` on one disorder realization.
pub fn exact_w(config: &PolymerConfig, field: &LatticeField) -> Result<WTrajectory> {
    config.validate()?;
    if field.env() != &config.env {
        return Err(Error::Incompatible("field environment differs from the configuration".into()));
    }
    let kernel = WindowKernel::new(&config.law, config.half_width)?;
    Ok(exact_w_with(&kernel, config.beta, config.horizon, field))
}

/// DP with a prebuilt kernel; rows are rescaled by their maximum and the log
/// factors accumulated.
pub fn exact_w_with(kernel: &WindowKernel, beta: f64, horizon: usize, field: &LatticeField) -> WTrajectory {
    let lambda = field.env().lambda(beta);
    let mut log_w = Vec::with_capacity(horizon);
    if beta == 0.0 {
        log_w.resize(horizon, 0.0);
    } else {
        let len = kernel.width();
        let m = kernel.half_width() as i64;
        let mut cur = vec![0.0; len];
        cur[m as usize] = 1.0;
        let mut next = vec![0.0; len];
        let mut omega = vec![0.0; len];
        let mut log_scale = 0.0;
        for n in 1..=horizon as u64 {
            kernel.step(&cur, &mut next);
            field.row(n, -m, &mut omega);
            for (a, w) in next.iter_mut().zip(&omega) {
                *a *= (beta * w - lambda).exp();
            }
            let top = next.iter().copied().fold(0.0, f64::max);
            let total: f64 = next.iter().map(|a| a / top).sum();
            log_scale += top.ln();
            log_w.push(log_scale + total.ln());
            next.iter_mut().for_each(|a| *a /= top);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    let w = log_w.iter().map(|l| l.exp()).collect();
    let log_z = log_w.iter().enumerate().map(|(k, l)| l + (k + 1) as f64 * lambda).collect();
    WTrajectory {
        w,
        log_w,
        log_z,
        mass_loss: kernel.mass_loss(),
    }
}

/// Sample mean of `W_N` over independent disorder replicas.
pub fn mean_w_mc(config: &PolymerConfig, replicas: usize) -> Result<Estimate> {
    if replicas < 2 {
        return Err(Error::invalid("need at least two replicas"));
    }
    let finals = final_log_w(config, replicas)?;
    Ok(finals.iter().map(|l| l.exp()).collect::<Accumulator>().estimate())
}

fn final_log_w(config: &PolymerConfig, replicas: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let kernel = WindowKernel::new(&config.law, config.half_width)?;
    Ok((0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let t = exact_w_with(&kernel, config.beta, config.horizon, &config.field(r));
            t.log_w[config.horizon - 1]
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FreeEnergyGap {
    /// `(1/N) mean(ln Z_N) - λ(β)`.
    pub p_hat: f64,
    pub stderr: f64,
    pub mass_loss: f64,
    pub replicas: usize,
}

pub fn free_energy_gap(config: &PolymerConfig, replicas: usize) -> Result<FreeEnergyGap> {
    if replicas < 2 {
        return Err(Error::invalid("need at least two replicas"));
    }
    let n = config.horizon as f64;
    let est = final_log_w(config, replicas)?
        .iter()
        .map(|l| l / n)
        .collect::<Accumulator>()
        .estimate();
    Ok(FreeEnergyGap {
        p_hat: est.mean,
        stderr: est.stderr,
        mass_loss: config.law.abs_exceed(2 * config.half_width as u64),
        replicas,
    })
}

/// Largest `|E[W_{n+1} | G_n] - W_n|` over `prefixes` disorder prefixes and
/// all `n < N`, the conditional expectation taken by enumerating every
/// configuration of row `n + 1`.
pub fn martingale_check(config: &PolymerConfig, prefixes: usize) -> Result<f64> {
    config.validate()?;
    let atoms = config
        .env
        .atoms()
        .filter(|a| a.len() <= 3)
        .ok_or_else(|| Error::Incompatible("martingale check needs a law with at most 3 atoms".into()))?;
    if config.half_width > 3 || config.horizon > 4 {
        return Err(Error::invalid("martingale check needs M <= 3 and N <= 4"));
    }
    let kernel = WindowKernel::new(&config.law, config.half_width)?;
    let len = kernel.width();
    let terms = atoms.len().pow(len as u32);
    if terms > MAX_ENUMERATION_TERMS {
        return Err(Error::invalid("row enumeration too large"));
    }
    let beta = config.beta;
    if beta == 0.0 {
        // Weights collapse and W_n is identically one.
        return Ok(0.0);
    }
    let lambda = config.env.lambda(beta);
    let m = config.half_width as i64;
    let mut worst: f64 = 0.0;
    for r in 0..prefixes as u64 {
        let field = config.field(r);
        let mut cur = vec![0.0; len];
        cur[m as usize] = 1.0;
        let mut spread = vec![0.0; len];
        for n in 0..config.horizon as u64 {
            let w_n: f64 = cur.iter().sum();
            kernel.step(&cur, &mut spread);
            let mut expect = 0.0;
            for code in 0..terms {
                let mut c = code;
                let mut prob = 1.0;
                let mut w_next = 0.0;
                for s in &spread {
                    let (v, p) = atoms[c % atoms.len()];
                    c /= atoms.len();
                    prob *= p;
                    w_next += s * (beta * v - lambda).exp();
                }
                expect += prob * w_next;
            }
            worst = worst.max((expect - w_n).abs() / w_n);
            for (k, a) in spread.iter_mut().enumerate() {
                *a *= (beta * field.value(n + 1, k as i64 - m) - lambda).exp();
            }
            std::mem::swap(&mut cur, &mut spread);
        }
    }
    Ok(worst)
}

/// Upper bound on `E|W_N^{(M)} - W_N^{(M')}|` for `M < M'`.
///
/// Couple the two windowed walks so their unwrapped increments agree except
/// with probability `TV(K_M, K_{M'})` per step; while they agree and stay in
/// `[-M, M]`, both see the same sites. Off that event each weight has
/// disorder-mean one, giving `2 (N TV + P[exit])`.
pub fn window_change_bound(law: &IncrementLaw, horizon: usize, small: usize, large: usize) -> Result<f64> {
    if !(1 <= small && small < large) {
        return Err(Error::invalid("window change needs 1 <= M < M'"));
    }
    let loss_small = law.abs_exceed(2 * small as u64);
    let loss_large = law.abs_exceed(2 * large as u64);
    let tv = ((loss_small - loss_large) / (1.0 - loss_large)).max(0.0);
    let kernel = WindowKernel::new(law, small)?;
    let m = small as i64;
    let len = kernel.width();
    let mut cur = vec![0.0; len];
    cur[m as usize] = 1.0;
    let mut next = vec![0.0; len];
    for _ in 0..horizon {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &a) in cur.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (k, slot) in next.iter_mut().enumerate() {
                *slot += a * kernel.truncated(k as i64 - i as i64);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let stay: f64 = cur.iter().sum();
    Ok(2.0 * (horizon as f64 * tv + (1.0 - stay).max(0.0)))
}
