use rand::RngCore;
use serde::Serialize;

use super::{IncrementLaw, Kind, EXACT_LIMIT};
use crate::error::{Error, Result};
use crate::logmag::LogMagnitude;
use crate::rng::open_unit;

/// Outcome of a capped draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Draw {
    Value(i64),
    Overflow,
}

/// Condition (c) evaluated at one `(n, γ)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionC {
    pub n: u64,
    pub gamma: f64,
    pub s_n: LogMagnitude,
    pub ratio: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Smallest `x ≥ lo` with `pred(x)`, given `pred(hi)` and `pred` monotone.
/// Gallops from `lo` so that small answers are cheap.
fn first_true(lo: u64, hi: u64, pred: impl Fn(u64) -> bool) -> u64 {
    if lo >= hi || pred(lo) {
        return lo;
    }
    let mut left = lo + 1;
    let mut step = 1u64;
    let mut right = loop {
        let probe = lo.saturating_add(step).min(hi);
        if probe >= hi || pred(probe) {
            break probe;
        }
        left = probe + 1;
        step = step.saturating_mul(2);
    };
    while left < right {
        let mid = left + (right - left) / 2;
        if pred(mid) {
            right = mid;
        } else {
            left = mid + 1;
        }
    }
    right
}

impl IncrementLaw {
    /// Generalized inverse of the CDF of `|X₁|` at `u`.
    pub fn quantile_logmag(&self, u: f64) -> Result<LogMagnitude> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level {u} outside (0, 1)")));
        }
        if self.cdf_abs(EXACT_LIMIT) >= u {
            let x = first_true(0, EXACT_LIMIT, |x| self.cdf_abs(x) >= u);
            return Ok(LogMagnitude::from_u64(x));
        }
        Ok(LogMagnitude::from_ln(1, self.relaxed_ln_quantile(0.5 * (1.0 - u))))
    }

    /// Smallest `x ≥ 0` with `P[|X₁| > x] ≤ q`; the upper-tail parameterization
    /// keeps full precision for tiny `q`.
    pub fn quantile_upper(&self, q: f64) -> Result<LogMagnitude> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("tail level {q} outside (0, 1)")));
        }
        Ok(self.upper_unchecked(q))
    }

    fn upper_unchecked(&self, q: f64) -> LogMagnitude {
        if self.abs_exceed(EXACT_LIMIT) <= q {
            let x = first_true(0, EXACT_LIMIT, |x| self.abs_exceed(x) <= q);
            return LogMagnitude::from_u64(x);
        }
        LogMagnitude::from_ln(1, self.relaxed_ln_quantile(0.5 * q))
    }

    /// `ln x` solving `T(x) = level` on the continuum, for `x > EXACT_LIMIT`.
    fn relaxed_ln_quantile(&self, level: f64) -> f64 {
        let floor = (EXACT_LIMIT as f64).ln();
        if let Some(ln_y) = self.tail_inverse_ln(level) {
            let shift = self.spec.m0 as f64 - 1.0;
            return (ln_y + (-shift * (-ln_y).exp()).ln_1p()).max(floor);
        }
        if !matches!(self.kind, Kind::Critical(_)) {
            return floor;
        }
        // Bisection on v = ln ln x, where the critical tail is smooth.
        let tail_v = |v: f64| self.tail_at_ln(v.exp());
        let mut lo = floor.ln();
        let mut hi = lo + 1.0;
        while tail_v(hi) > level {
            lo = hi;
            hi = (2.0 * hi).min(700.0);
            if lo >= 700.0 {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail_v(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi.exp()
    }

    /// Inverse-CDF draw; `Overflow` when `|X| > cap`.
    pub fn sample_exact<R: RngCore + ?Sized>(&self, rng: &mut R, cap: u64) -> Draw {
        let negative = rng.next_u64() >> 63 == 1;
        let q = open_unit(rng);
        if self.abs_exceed(cap) > q {
            return Draw::Overflow;
        }
        let x = first_true(0, cap, |x| self.abs_exceed(x) <= q) as i64;
        Draw::Value(if negative { -x } else { x })
    }

    /// Uncapped draw in log-magnitude form; uses the same uniforms as
    /// [`sample_exact`](Self::sample_exact), so the two agree whenever the
    /// value fits under the cap.
    pub fn sample_logmag<R: RngCore + ?Sized>(&self, rng: &mut R) -> LogMagnitude {
        let negative = rng.next_u64() >> 63 == 1;
        let q = open_unit(rng);
        self.upper_unchecked(q).with_sign(if negative { -1 } else { 1 })
    }

    /// `s_n = min{s : P[X₁ ≥ s] ≤ (ln n)²/n}`.
    pub fn s_n(&self, n: u64) -> Result<LogMagnitude> {
        if n < 3 {
            return Err(Error::invalid("s_n needs n >= 3"));
        }
        let theta = (n as f64).ln().powi(2) / n as f64;
        if theta >= self.tail(1) {
            return Ok(LogMagnitude::from_u64(1));
        }
        if self.tail(EXACT_LIMIT) <= theta {
            return Ok(LogMagnitude::from_u64(first_true(1, EXACT_LIMIT, |s| self.tail(s) <= theta)));
        }
        Ok(LogMagnitude::from_ln(1, self.relaxed_ln_quantile(theta)))
    }

    /// `P[X₁ ∈ (s_n, 2n s_n)] / P[X₁ ≥ s_n]` against `n^{-γ}`.
    pub fn condition_c(&self, n: u64, gamma: f64) -> Result<ConditionC> {
        if !(gamma > 0.5) {
            return Err(Error::invalid(format!("gamma must exceed 1/2, got {gamma}")));
        }
        let s = self.s_n(n)?;
        let far = s.exact_abs().and_then(|v| v.checked_mul(2 * n)).filter(|v| *v <= 1u64 << 62);
        let ratio = match (s.exact_abs(), far) {
            (Some(v), Some(far)) => {
                let num = self.tail(v + 1) - self.tail(far);
                (num / self.tail(v)).max(0.0)
            }
            _ => {
                let ln_s = s.lnmag();
                let near = self.tail_at_ln(ln_s);
                let far = self.tail_at_ln(ln_s + (2.0 * n as f64).ln());
                (-(far.ln() - near.ln()).exp_m1()).max(0.0)
            }
        };
        let threshold = (n as f64).powf(-gamma);
        Ok(ConditionC {
            n,
            gamma,
            s_n: s,
            ratio,
            threshold,
            passes: ratio <= threshold,
        })
    }
}
