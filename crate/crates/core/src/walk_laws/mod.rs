//! Symmetric integer increment laws with slowly varying tails.
//!
//! Two kinds of family live here:
//!
//! * the *critical* family, defined by its pmf shape
//!   `K(n) = A (ln ln y)^α / (y (ln y)^2)` with `y = |n| + m0`; its tail has no
//!   closed form and is tabulated up to [`CROSSOVER`] and continued with an
//!   Euler–Maclaurin integral beyond;
//! * *tail-defined* families (`LogTail`, `LogLogTail`, `PowerTail`), defined by
//!   a closed-form one-sided tail `T(n) = c g(n + m0 - 1)`; their pmf is the
//!   tail difference, evaluated with `expm1`/`ln_1p` so it keeps full relative
//!   precision.
//!
//! Every family carries an explicit atom `K0` at the origin.

mod entropy;
mod quantile;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmag::LogMagnitude;
use crate::special::upper_gamma;

pub use entropy::Entropy;
pub use quantile::{ConditionC, Draw};

/// Partial summation switches to the integral continuation here.
pub const CROSSOVER: u64 = 1_000_000;

/// Quantiles up to this value are returned as exact integers.
pub const EXACT_LIMIT: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// pmf shape `(ln ln y)^α / (y (ln y)^2)`.
    Critical { alpha: f64 },
    /// Tail `∝ (ln y)^{-a}`, `0 < a ≤ 1`.
    LogTail { a: f64 },
    /// Tail `∝ (ln ln y)^{-b}`, `b > 0`.
    LogLogTail { b: f64 },
    /// Tail `∝ y^{-a}`; a comparison law with a positive tail exponent.
    PowerTail { a: f64 },
    /// `K(±1) = (1 - K0)/2`; baseline only, violates positivity.
    NearestNeighbor,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Critical { .. } => "critical",
            Family::LogTail { .. } => "log_tail",
            Family::LogLogTail { .. } => "loglog_tail",
            Family::PowerTail { .. } => "power_tail",
            Family::NearestNeighbor => "nearest_neighbor",
        }
    }

    fn min_offset(&self) -> u64 {
        match self {
            Family::Critical { .. } | Family::LogLogTail { .. } => 3,
            Family::LogTail { .. } => 2,
            Family::PowerTail { .. } | Family::NearestNeighbor => 1,
        }
    }

    fn default_k0(&self) -> f64 {
        match self {
            Family::NearestNeighbor => 0.0,
            _ => 0.5,
        }
    }
}

/// Fully resolved law parameters, as echoed into result metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    #[serde(flatten)]
    pub family: Family,
    pub m0: u64,
    pub k0: f64,
}

#[derive(Clone, Copy, Debug)]
enum Profile {
    Power { a: f64 },
    Log { a: f64 },
    LogLog { b: f64 },
}

impl Profile {
    fn exponent(&self) -> f64 {
        match *self {
            Profile::Power { a } | Profile::Log { a } => a,
            Profile::LogLog { b } => b,
        }
    }

    fn g(&self, y: f64) -> f64 {
        self.g_from_ln(y.ln())
    }

    fn g_from_ln(&self, ln_y: f64) -> f64 {
        match *self {
            Profile::Power { a } => (-a * ln_y).exp(),
            Profile::Log { a } => ln_y.powf(-a),
            Profile::LogLog { b } => ln_y.ln().powf(-b),
        }
    }

    /// `g(y) - g(y + 1)` without cancellation.
    fn decrement(&self, y: f64) -> f64 {
        let ln_y = y.ln();
        let inv = 1.0 / y;
        let rel = match self {
            Profile::Power { .. } => inv,
            Profile::Log { .. } => inv.ln_1p() / ln_y,
            Profile::LogLog { .. } => {
                let step = (inv.ln_1p() / ln_y).ln_1p();
                step / ln_y.ln()
            }
        };
        self.g_from_ln(ln_y) * -(-self.exponent() * rel.ln_1p()).exp_m1()
    }

    /// `ln(-g'(y))` from `ln y`; the continuum pmf for astronomically large y.
    fn ln_neg_derivative(&self, ln_y: f64) -> f64 {
        match *self {
            Profile::Power { a } => a.ln() - (a + 1.0) * ln_y,
            Profile::Log { a } => a.ln() - (a + 1.0) * ln_y.ln() - ln_y,
            Profile::LogLog { b } => {
                let l2 = ln_y.ln();
                b.ln() - (b + 1.0) * l2.ln() - ln_y - l2
            }
        }
    }

    /// Solves `g(y) = level` for `ln y`.
    fn inverse_ln(&self, level: f64) -> f64 {
        match *self {
            Profile::Power { a } => -level.ln() / a,
            Profile::Log { a } => level.powf(-1.0 / a),
            Profile::LogLog { b } => level.powf(-1.0 / b).exp(),
        }
    }
}

#[derive(Debug)]
struct CriticalTable {
    alpha: f64,
    m0: u64,
    norm: f64,
    /// `suffix[m] = T(m)` for `1 ≤ m ≤ CROSSOVER + 1`.
    suffix: Vec<f64>,
    /// `-K0 ln K0 - 2 Σ_{m ≤ CROSSOVER} K(m) ln K(m)`.
    entropy_head: f64,
}

/// Log of the critical shape `(ln ln y)^α / (y (ln y)^2)`, from `ln y`.
fn critical_ln_shape(alpha: f64, ln_y: f64) -> f64 {
    let l2 = ln_y.ln();
    alpha * l2.ln() - ln_y - 2.0 * l2
}

/// `Σ_{k ≥ y} shape(k)` for integer `y`, continued to real `y` (given as `ln y`)
/// by Euler–Maclaurin with two correction terms.
fn critical_shape_tail(alpha: f64, ln_y: f64) -> f64 {
    let l2 = ln_y.ln();
    let integral = upper_gamma(alpha + 1.0, l2);
    let f = critical_ln_shape(alpha, ln_y).exp();
    let inv_y = (-ln_y).exp();
    let f_prime = f * inv_y * (alpha / (ln_y * l2) - 1.0 - 2.0 / ln_y);
    integral + 0.5 * f - f_prime / 12.0
}

impl CriticalTable {
    fn build(alpha: f64, m0: u64, k0: f64) -> Self {
        let x = CROSSOVER as usize;
        let mut raw = vec![0.0; x + 2];
        let beyond = critical_shape_tail(alpha, ((CROSSOVER + 1 + m0) as f64).ln());
        raw[x + 1] = beyond;
        // Neumaier-compensated suffix sums, smallest terms first.
        let (mut sum, mut comp) = (beyond, 0.0);
        for m in (1..=x).rev() {
            let f = critical_ln_shape(alpha, ((m as u64 + m0) as f64).ln()).exp();
            let t = sum + f;
            comp += if sum.abs() >= f.abs() { (sum - t) + f } else { (f - t) + sum };
            sum = t;
            raw[m] = sum + comp;
        }
        let norm = 0.5 * (1.0 - k0) / raw[1];
        let mut suffix: Vec<f64> = raw.iter().map(|r| r * norm).collect();
        suffix[1] = 0.5 * (1.0 - k0);

        let mut head = -k0 * k0.ln();
        let ln_norm = norm.ln();
        for m in 1..=x {
            let ln_k = ln_norm + critical_ln_shape(alpha, ((m as u64 + m0) as f64).ln());
            head -= 2.0 * ln_k.exp() * ln_k;
        }
        CriticalTable {
            alpha,
            m0,
            norm,
            suffix,
            entropy_head: head,
        }
    }

    fn ln_pmf_from_ln_y(&self, ln_y: f64) -> f64 {
        self.norm.ln() + critical_ln_shape(self.alpha, ln_y)
    }

    fn tail(&self, m: u64) -> f64 {
        if m <= CROSSOVER + 1 {
            self.suffix[m as usize]
        } else {
            self.norm * critical_shape_tail(self.alpha, ((m + self.m0) as f64).ln())
        }
    }

    fn tail_from_ln_x(&self, ln_x: f64) -> f64 {
        let ln_y = ln_x + (self.m0 as f64 * (-ln_x).exp()).ln_1p();
        self.norm * critical_shape_tail(self.alpha, ln_y)
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Critical(Arc<CriticalTable>),
    Tail { profile: Profile, scale: f64 },
    NearestNeighbor,
}

/// A symmetric, unimodal increment law on ℤ.
///
/// Cheap to clone; the critical family shares its tail table.
#[derive(Clone, Debug)]
pub struct IncrementLaw {
    spec: LawSpec,
    kind: Kind,
}

impl IncrementLaw {
    /// Builds a law, resolving the default offset `m0` (smallest valid for
    /// the family) and the default atom `K0` (0.5, or 0 for the baseline).
    pub fn new(family: Family, m0: Option<u64>, k0: Option<f64>) -> Result<Self> {
        let k0 = k0.unwrap_or_else(|| family.default_k0());
        validate_family(&family, k0)?;
        let m0 = match m0 {
            Some(m) => {
                if m < family.min_offset() {
                    return Err(Error::invalid(format!(
                        "m0 = {m} below the minimum {} for {}",
                        family.min_offset(),
                        family.name()
                    )));
                }
                if !shape_monotone(&family, m) {
                    return Err(Error::invalid(format!(
                        "m0 = {m} leaves the {} shape non-monotone",
                        family.name()
                    )));
                }
                m
            }
            None => {
                let mut m = family.min_offset();
                while !shape_monotone(&family, m) {
                    m += 1;
                }
                m
            }
        };
        let kind = match family {
            Family::Critical { alpha } => Kind::Critical(Arc::new(CriticalTable::build(alpha, m0, k0))),
            Family::LogTail { a } => tail_kind(Profile::Log { a }, m0, k0),
            Family::LogLogTail { b } => tail_kind(Profile::LogLog { b }, m0, k0),
            Family::PowerTail { a } => tail_kind(Profile::Power { a }, m0, k0),
            Family::NearestNeighbor => Kind::NearestNeighbor,
        };
        let law = IncrementLaw {
            spec: LawSpec { family, m0, k0 },
            kind,
        };
        if !matches!(family, Family::NearestNeighbor) && law.pmf(1) > k0 {
            return Err(Error::invalid(format!(
                "K0 = {k0} is below K(1) = {}; the law would not be unimodal",
                law.pmf(1)
            )));
        }
        Ok(law)
    }

    pub fn critical(alpha: f64) -> Result<Self> {
        Self::new(Family::Critical { alpha }, None, None)
    }

    pub fn nearest_neighbor(k0: f64) -> Result<Self> {
        Self::new(Family::NearestNeighbor, None, Some(k0))
    }

    pub fn spec(&self) -> LawSpec {
        self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn k0(&self) -> f64 {
        self.spec.k0
    }

    /// Whether `K(n) > 0` for every n.
    pub fn is_positive(&self) -> bool {
        !matches!(self.kind, Kind::NearestNeighbor)
    }

    /// Whether `P[X ≥ n]` is slowly varying.
    pub fn has_zero_tail_exponent(&self) -> bool {
        matches!(
            self.spec.family,
            Family::Critical { .. } | Family::LogTail { .. } | Family::LogLogTail { .. }
        )
    }

    /// Normalizing constant `A` of the critical family.
    pub fn norm_const(&self) -> Option<f64> {
        match &self.kind {
            Kind::Critical(t) => Some(t.norm),
            _ => None,
        }
    }

    /// `K(n) = P[X₁ = n]`.
    pub fn pmf(&self, n: i64) -> f64 {
        let m = n.unsigned_abs();
        if m == 0 {
            return self.spec.k0;
        }
        match &self.kind {
            Kind::Critical(t) => t.ln_pmf_from_ln_y(((m + t.m0) as f64).ln()).exp(),
            Kind::Tail { profile, scale } => scale * profile.decrement((m + self.spec.m0 - 1) as f64),
            Kind::NearestNeighbor => {
                if m == 1 {
                    0.5 * (1.0 - self.spec.k0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn ln_pmf(&self, n: i64) -> f64 {
        match &self.kind {
            Kind::Critical(t) if n != 0 => t.ln_pmf_from_ln_y(((n.unsigned_abs() + t.m0) as f64).ln()),
            _ => self.pmf(n).ln(),
        }
    }

    /// `ln K(x)` at a possibly astronomically large point; beyond the exact
    /// integer range the continuum density is used.
    pub fn ln_pmf_logmag(&self, x: &LogMagnitude) -> f64 {
        if let Some(v) = x.exact_abs().filter(|v| *v <= EXACT_LIMIT) {
            return self.ln_pmf(v as i64);
        }
        let ln_x = x.lnmag();
        match &self.kind {
            Kind::Critical(t) => t.ln_pmf_from_ln_y(ln_x + (t.m0 as f64 * (-ln_x).exp()).ln_1p()),
            Kind::Tail { profile, scale } => {
                let ln_y = ln_x + ((self.spec.m0 as f64 - 1.0) * (-ln_x).exp()).ln_1p();
                scale.ln() + profile.ln_neg_derivative(ln_y)
            }
            Kind::NearestNeighbor => f64::NEG_INFINITY,
        }
    }

    /// One-sided tail `P[X₁ ≥ n]`.
    pub fn tail(&self, n: u64) -> f64 {
        if n == 0 {
            return self.spec.k0 + 0.5 * (1.0 - self.spec.k0);
        }
        if n == 1 {
            return 0.5 * (1.0 - self.spec.k0);
        }
        match &self.kind {
            Kind::Critical(t) => t.tail(n),
            Kind::Tail { profile, scale } => scale * profile.g((n + self.spec.m0 - 1) as f64),
            Kind::NearestNeighbor => 0.0,
        }
    }

    /// `P[X₁ ≥ x]` continued to real `x ≥ 1`, given as `ln x`.
    pub fn tail_at_ln(&self, ln_x: f64) -> f64 {
        match &self.kind {
            Kind::Critical(t) => {
                if ln_x <= ((CROSSOVER + 1) as f64).ln() {
                    t.tail(ln_x.exp().ceil() as u64)
                } else {
                    t.tail_from_ln_x(ln_x)
                }
            }
            Kind::Tail { profile, scale } => {
                let ln_y = ln_x + ((self.spec.m0 as f64 - 1.0) * (-ln_x).exp()).ln_1p();
                scale * profile.g_from_ln(ln_y)
            }
            Kind::NearestNeighbor => {
                if ln_x <= 0.0 {
                    self.tail(1)
                } else {
                    0.0
                }
            }
        }
    }

    /// `P[|X₁| ≤ x]`.
    pub fn cdf_abs(&self, x: u64) -> f64 {
        if x == 0 {
            return self.spec.k0;
        }
        1.0 - 2.0 * self.tail(x + 1)
    }

    /// `P[|X₁| > x]`.
    pub fn abs_exceed(&self, x: u64) -> f64 {
        if x == 0 {
            return 1.0 - self.spec.k0;
        }
        2.0 * self.tail(x + 1)
    }

    /// `P[X₁ ≤ x]` for the signed law (used by distributional tests).
    pub fn cdf(&self, x: i64) -> f64 {
        if x < 0 {
            self.tail(x.unsigned_abs())
        } else {
            1.0 - self.tail(x as u64 + 1)
        }
    }

    /// Inverts the closed-form tail (`m0` offset neglected, `x > EXACT_LIMIT`).
    fn tail_inverse_ln(&self, level: f64) -> Option<f64> {
        match &self.kind {
            Kind::Tail { profile, scale } => Some(profile.inverse_ln(level / scale)),
            _ => None,
        }
    }

    pub(crate) fn critical_table_entropy_head(&self) -> Option<(f64, f64, u64, f64)> {
        match &self.kind {
            Kind::Critical(t) => Some((t.entropy_head, t.norm, t.m0, t.alpha)),
            _ => None,
        }
    }

    pub(crate) fn tail_profile_exponent(&self) -> Option<f64> {
        match &self.kind {
            Kind::Tail { profile, .. } => Some(profile.exponent()),
            _ => None,
        }
    }

    /// Continuum pmf at real `x` (for tail integrals of tail-defined laws).
    pub(crate) fn continuum_pmf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Critical(t) => t.ln_pmf_from_ln_y((x + t.m0 as f64).ln()).exp(),
            Kind::Tail { profile, scale } => scale * profile.decrement(x + self.spec.m0 as f64 - 1.0),
            Kind::NearestNeighbor => 0.0,
        }
    }
}

fn tail_kind(profile: Profile, m0: u64, k0: f64) -> Kind {
    let scale = 0.5 * (1.0 - k0) / profile.g(m0 as f64);
    Kind::Tail { profile, scale }
}

fn validate_family(family: &Family, k0: f64) -> Result<()> {
    let nn = matches!(family, Family::NearestNeighbor);
    let k0_ok = if nn { (0.0..1.0).contains(&k0) } else { k0 > 0.0 && k0 < 1.0 };
    if !k0_ok {
        return Err(Error::invalid(format!("K0 = {k0} outside its range")));
    }
    match *family {
        Family::Critical { alpha } if !alpha.is_finite() => Err(Error::invalid("alpha must be finite")),
        Family::LogTail { a } if !(a > 0.0 && a <= 1.0) => Err(Error::invalid(format!("log_tail needs 0 < a <= 1, got {a}"))),
        Family::LogLogTail { b } if !(b > 0.0 && b.is_finite()) => Err(Error::invalid(format!("loglog_tail needs b > 0, got {b}"))),
        Family::PowerTail { a } if !(a > 0.0 && a.is_finite()) => Err(Error::invalid(format!("power_tail needs a > 0, got {a}"))),
        _ => Ok(()),
    }
}

/// The critical shape decreases on `y ≥ m0 + 1` iff `α < lnln y (ln y + 2)` there;
/// the right side increases in y. Tail-defined families are convex for any
/// admissible offset.
fn shape_monotone(family: &Family, m0: u64) -> bool {
    match *family {
        Family::Critical { alpha } => {
            let l1 = ((m0 + 1) as f64).ln();
            alpha < l1.ln() * (l1 + 2.0)
        }
        _ => true,
    }
}
