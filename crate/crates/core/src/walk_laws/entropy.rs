use serde::Serialize;

use super::{Family, IncrementLaw, CROSSOVER};
use crate::error::{Error, Result};
use crate::special::integrate;

/// Shannon entropy `Σ K(n) ln(1/K(n))` of an increment law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Entropy {
    /// `lower ≤ H ≤ upper`, with `value` the bracket midpoint.
    Finite { value: f64, lower: f64, upper: f64 },
    /// The series diverges; `lower_bound` is the partial sum over `|n| ≤ CROSSOVER`.
    Divergent { lower_bound: f64 },
}

impl Entropy {
    pub fn value(&self) -> Option<f64> {
        match self {
            Entropy::Finite { value, .. } => Some(*value),
            Entropy::Divergent { .. } => None,
        }
    }

    pub fn width(&self) -> Option<f64> {
        match self {
            Entropy::Finite { lower, upper, .. } => Some(upper - lower),
            Entropy::Divergent { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Entropy::Finite { .. })
    }
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

impl IncrementLaw {
    /// Entropy with a rigorous tail bracket; errors when the bracket is wider
    /// than `tol` or cannot be established.
    pub fn entropy(&self, tol: f64) -> Result<Entropy> {
        if !(tol > 0.0) {
            return Err(Error::invalid("entropy tolerance must be positive"));
        }
        let k0 = self.k0();
        let (value, lower, upper) = match self.family() {
            Family::NearestNeighbor => {
                let v = xlogx(k0) + 2.0 * xlogx(0.5 * (1.0 - k0));
                (v, v, v)
            }
            Family::Critical { alpha } => {
                let (head, norm, m0, _) = self.critical_table_entropy_head().expect("critical table");
                if alpha >= -1.0 {
                    return Ok(Entropy::Divergent { lower_bound: head });
                }
                self.critical_bracket(head, norm, m0, alpha)
            }
            Family::LogTail { .. } | Family::LogLogTail { .. } => {
                return Ok(Entropy::Divergent {
                    lower_bound: self.head_by_summation(),
                });
            }
            Family::PowerTail { .. } => self.power_bracket(tol)?,
        };
        if upper - lower >= tol {
            return Err(Error::Numerical(format!(
                "entropy bracket width {} is not below {tol}",
                upper - lower
            )));
        }
        Ok(Entropy::Finite { value, lower, upper })
    }

    fn head_by_summation(&self) -> f64 {
        let body: f64 = (1..=CROSSOVER as i64).rev().map(|m| xlogx(self.pmf(m))).sum();
        xlogx(self.k0()) + 2.0 * body
    }

    /// `Σ_{m > X} h(m)` is bracketed by `∫_{X+1}^∞ h` and `h(X+1) + ∫_{X+1}^∞ h`
    /// since `h = -K ln K` decreases there. In `u = ln ln y` the integral is
    /// `A ∫_U^∞ u^α e^{-u} (-ln A + e^u + 2u - α ln u) du`; the `e^u` part
    /// integrates in closed form.
    fn critical_bracket(&self, head: f64, norm: f64, m0: u64, alpha: f64) -> (f64, f64, f64) {
        let u0 = (((CROSSOVER + 1 + m0) as f64).ln()).ln();
        let closed = norm * u0.powf(alpha + 1.0) / (-alpha - 1.0);
        let ln_norm = norm.ln();
        let span = 80.0;
        let integrand = |u: f64| norm * u.powf(alpha) * (-u).exp() * (-ln_norm + 2.0 * u - alpha * u.ln());
        let (numeric, quad_err) = integrate(integrand, u0, u0 + span, 1e-14);
        let far = u0 + span;
        let remainder = norm * far.powf(alpha) * (-far).exp() * (-ln_norm + 2.0 * far + alpha.abs() * far.ln() + 2.0);
        let err = quad_err + remainder;
        let tail = closed + numeric;
        let first = xlogx(self.pmf((CROSSOVER + 1) as i64));
        let lower = head + 2.0 * (tail - err);
        let upper = head + 2.0 * (tail + err + first);
        (0.5 * (lower + upper), lower, upper)
    }

    /// Power tails: the same bracket, integrated in `t = ln x`.
    fn power_bracket(&self, tol: f64) -> Result<(f64, f64, f64)> {
        let a = self.tail_profile_exponent().expect("tail-defined law");
        let head = self.head_by_summation();
        let t0 = ((CROSSOVER + 1) as f64).ln();
        let t_end = (t0 + 80.0 / a).min(700.0);
        let integrand = |t: f64| {
            let x = t.exp();
            xlogx(self.continuum_pmf(x)) * x
        };
        let (numeric, quad_err) = integrate(integrand, t0, t_end, 1e-13);
        // The integrand decays like t e^{-a t}; twice the pure-exponential
        // remainder covers the polynomial factor.
        let remainder = integrand(t_end) * 2.0 / a;
        if !(remainder < 0.25 * tol) {
            return Err(Error::Numerical(format!(
                "power-tail entropy remainder {remainder} not controlled for a = {a}"
            )));
        }
        let err = quad_err + remainder;
        let first = xlogx(self.pmf((CROSSOVER + 1) as i64));
        let lower = head + 2.0 * (numeric - err);
        let upper = head + 2.0 * (numeric + err + first);
        Ok((0.5 * (lower + upper), lower, upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_is_log_two() {
        let nn = IncrementLaw::nearest_neighbor(0.0).unwrap();
        let h = nn.entropy(1e-9).unwrap();
        assert_eq!(h.value(), Some(std::f64::consts::LN_2));
        assert_eq!(h.width(), Some(0.0));
    }

    #[test]
    fn critical_dichotomy_at_minus_one() {
        for alpha in [-3.0, -2.0, -1.5] {
            assert!(IncrementLaw::critical(alpha).unwrap().entropy(1e-4).unwrap().is_finite());
        }
        for alpha in [-1.0, 0.0, 1.0] {
            assert!(!IncrementLaw::critical(alpha).unwrap().entropy(1e-4).unwrap().is_finite());
        }
    }

    #[test]
    fn slowly_varying_tails_diverge() {
        let law = IncrementLaw::new(Family::LogTail { a: 1.0 }, None, None).unwrap();
        match law.entropy(1e-4).unwrap() {
            Entropy::Divergent { lower_bound } => assert!(lower_bound > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_tail_bracket_and_failure() {
        let law = IncrementLaw::new(Family::PowerTail { a: 2.0 }, None, None).unwrap();
        let h = law.entropy(1e-6).unwrap();
        assert!(h.width().unwrap() < 1e-6);
        let slow = IncrementLaw::new(Family::PowerTail { a: 0.01 }, None, None).unwrap();
        assert!(slow.entropy(1e-4).is_err());
    }
}
