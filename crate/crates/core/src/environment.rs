//! Disorder laws with closed-form cumulant generating functions.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::open_unit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EnvironmentLaw {
    /// Standard normal.
    Gaussian,
    /// Values {0, 1} with `P[ω = 1] = p`.
    Bernoulli { p: f64 },
    /// Finitely many `(value, probability)` atoms, sorted by value.
    DiscreteFinite { atoms: Vec<(f64, f64)> },
}

/// One row of the large-β diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitRow {
    pub beta: f64,
    /// `P̃^β[ω̃ < K]`.
    pub prob_below: f64,
    pub lambda_prime: f64,
    pub excess: f64,
    /// `s = ess sup ω` (infinite for the Gaussian).
    pub target_sup: f64,
    /// `-ln P[ω = s]` (infinite when `s` carries no atom).
    pub target_excess: f64,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl EnvironmentLaw {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let env = EnvironmentLaw::Bernoulli { p };
        env.validate()?;
        Ok(env)
    }

    /// Sorts atoms by value and merges duplicates.
    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let env = EnvironmentLaw::DiscreteFinite { atoms: merged };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvironmentLaw::Gaussian => Ok(()),
            EnvironmentLaw::Bernoulli { p } => {
                if *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("bernoulli p = {p} outside (0, 1)")))
                }
            }
            EnvironmentLaw::DiscreteFinite { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::invalid("discrete environment needs at least one atom"));
                }
                if atoms.iter().any(|(v, p)| !v.is_finite() || !(*p > 0.0)) {
                    return Err(Error::invalid("atoms need finite values and positive probabilities"));
                }
                if atoms.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::invalid("atoms must be strictly increasing in value"));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("atom probabilities sum to {total}")));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvironmentLaw::Gaussian => "gaussian",
            EnvironmentLaw::Bernoulli { .. } => "bernoulli",
            EnvironmentLaw::DiscreteFinite { .. } => "discrete_finite",
        }
    }

    /// Atoms for the bounded variants, sorted by value.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            EnvironmentLaw::Gaussian => None,
            EnvironmentLaw::Bernoulli { p } => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            EnvironmentLaw::DiscreteFinite { atoms } => Some(atoms.clone()),
        }
    }

    pub fn ess_sup(&self) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => f64::INFINITY,
            EnvironmentLaw::Bernoulli { .. } => 1.0,
            EnvironmentLaw::DiscreteFinite { atoms } => atoms.last().expect("validated").0,
        }
    }

    /// `P[ω = s]`; zero for the Gaussian.
    pub fn mass_at_sup(&self) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => 0.0,
            EnvironmentLaw::Bernoulli { p } => *p,
            EnvironmentLaw::DiscreteFinite { atoms } => atoms.last().expect("validated").1,
        }
    }

    pub fn mean(&self) -> f64 {
        self.lambda_prime(0.0)
    }

    /// `λ(β) = ln E e^{βω}`.
    pub fn lambda(&self, beta: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => 0.5 * beta * beta,
            EnvironmentLaw::Bernoulli { p } => {
                if beta > 0.0 {
                    beta + (p + (1.0 - p) * (-beta).exp()).ln()
                } else {
                    (p * beta.exp_m1()).ln_1p()
                }
            }
            EnvironmentLaw::DiscreteFinite { atoms } => {
                let top = atoms.iter().map(|a| beta * a.0).fold(f64::NEG_INFINITY, f64::max);
                top + atoms.iter().map(|(v, p)| p * (beta * v - top).exp()).sum::<f64>().ln()
            }
        }
    }

    /// `λ'(β)`, the mean of the tilted law.
    pub fn lambda_prime(&self, beta: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => beta,
            EnvironmentLaw::Bernoulli { p } => {
                if beta > 0.0 {
                    p / (p + (1.0 - p) * (-beta).exp())
                } else {
                    p * beta.exp() / (1.0 + p * beta.exp_m1())
                }
            }
            EnvironmentLaw::DiscreteFinite { .. } => self
                .tilted_atoms(beta)
                .expect("bounded")
                .iter()
                .map(|(v, w)| v * w)
                .sum(),
        }
    }

    /// `βλ'(β) - λ(β)`.
    pub fn excess(&self, beta: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => 0.5 * beta * beta,
            _ => {
                // Relative entropy Σ w ln(w/p) of the tilt.
                let lambda = self.lambda(beta);
                let atoms = self.atoms().expect("bounded");
                let tilted = self.tilted_atoms(beta).expect("bounded");
                atoms
                    .iter()
                    .zip(&tilted)
                    .map(|((v, _), (_, w))| if *w > 0.0 { w * (beta * v - lambda) } else { 0.0 })
                    .sum()
            }
        }
    }

    /// Atoms of the tilted law `p e^{βv - λ(β)}`.
    pub fn tilted_atoms(&self, beta: f64) -> Option<Vec<(f64, f64)>> {
        let atoms = self.atoms()?;
        let lambda = self.lambda(beta);
        Some(atoms.iter().map(|(v, p)| (*v, p * (beta * v - lambda).exp())).collect())
    }

    /// Inverse-CDF transform of an open uniform; shared by field generation
    /// and direct sampling.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => standard_normal().inverse_cdf(u),
            EnvironmentLaw::Bernoulli { p } => {
                if u < 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
            EnvironmentLaw::DiscreteFinite { atoms } => pick_atom(atoms, u),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.from_uniform(open_unit(rng))
    }

    pub fn tilted_from_uniform(&self, beta: f64, u: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => beta + standard_normal().inverse_cdf(u),
            _ => pick_atom(&self.tilted_atoms(beta).expect("bounded"), u),
        }
    }

    /// Draw from the tilted law `e^{βω - λ(β)} P(dω)`.
    pub fn tilted_sample<R: RngCore + ?Sized>(&self, beta: f64, rng: &mut R) -> f64 {
        self.tilted_from_uniform(beta, open_unit(rng))
    }

    /// CDF of the base law.
    pub fn cdf(&self, x: f64) -> f64 {
        self.tilted_cdf(0.0, x)
    }

    /// CDF of the tilted law.
    pub fn tilted_cdf(&self, beta: f64, x: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => standard_normal().cdf(x - beta),
            _ => self
                .tilted_atoms(beta)
                .expect("bounded")
                .iter()
                .filter(|(v, _)| *v <= x)
                .map(|(_, w)| w)
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// `P̃^β[ω̃ < k]`.
    pub fn tilted_prob_below(&self, beta: f64, k: f64) -> f64 {
        match self {
            EnvironmentLaw::Gaussian => standard_normal().cdf(k - beta),
            _ => self
                .tilted_atoms(beta)
                .expect("bounded")
                .iter()
                .filter(|(v, _)| *v < k)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Large-β limits: tilted mass below `k`, `λ'`, and the excess, with their
    /// targets. Checks monotone approach along the (increasing) grid.
    pub fn limit_diagnostics(&self, betas: &[f64], k: f64) -> Result<Vec<LimitRow>> {
        let sup = self.ess_sup();
        if !(k < sup) {
            return Err(Error::invalid(format!("threshold {k} must lie below ess sup {sup}")));
        }
        if betas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("beta grid must be strictly increasing"));
        }
        let mass = self.mass_at_sup();
        let target_excess = if mass > 0.0 { -mass.ln() } else { f64::INFINITY };
        let rows: Vec<LimitRow> = betas
            .iter()
            .map(|&beta| LimitRow {
                beta,
                prob_below: self.tilted_prob_below(beta, k),
                lambda_prime: self.lambda_prime(beta),
                excess: self.excess(beta),
                target_sup: sup,
                target_excess,
            })
            .collect();
        let slack = 1e-12;
        for w in rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.beta >= 0.0
                && (b.prob_below > a.prob_below + slack
                    || b.lambda_prime < a.lambda_prime - slack
                    || b.excess < a.excess - slack)
            {
                return Err(Error::contract(format!(
                    "limits not monotone between beta = {} and beta = {}",
                    a.beta, b.beta
                )));
            }
        }
        for r in &rows {
            if r.lambda_prime > sup + slack || r.excess > target_excess + 1e-9 {
                return Err(Error::contract(format!("limit overshoot at beta = {}", r.beta)));
            }
        }
        Ok(rows)
    }
}

fn pick_atom(atoms: &[(f64, f64)], u: f64) -> f64 {
    let mut acc = 0.0;
    for (v, p) in atoms {
        acc += p;
        if u < acc {
            return *v;
        }
    }
    atoms.last().expect("non-empty").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{replica_rng, Stream};
    use crate::stats::Accumulator;

    fn variants() -> Vec<EnvironmentLaw> {
        vec![
            EnvironmentLaw::Gaussian,
            EnvironmentLaw::bernoulli(0.3).unwrap(),
            EnvironmentLaw::discrete(vec![(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)]).unwrap(),
        ]
    }

    #[test]
    fn closed_forms() {
        for env in variants() {
            assert_eq!(env.lambda(0.0), 0.0);
            assert_eq!(env.excess(0.0), 0.0);
        }
        assert_eq!(EnvironmentLaw::Gaussian.lambda(2.0), 2.0);
        let b = EnvironmentLaw::bernoulli(0.3).unwrap();
        assert!((b.lambda(1.0) - (0.7 + 0.3 * 1f64.exp()).ln()).abs() < 1e-15);
        let e2 = 2f64.exp();
        assert!((b.lambda_prime(2.0) - 0.3 * e2 / (0.7 + 0.3 * e2)).abs() < 1e-15);
        assert!(b.lambda(500.0).is_finite());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for env in variants() {
            for beta in [-3.0, -0.5, 0.0, 0.7, 2.0, 4.5] {
                let h = 1e-5;
                let fd = (env.lambda(beta + h) - env.lambda(beta - h)) / (2.0 * h);
                assert!((fd - env.lambda_prime(beta)).abs() < 1e-6, "{env:?} beta={beta}");
            }
        }
    }

    #[test]
    fn lambda_is_convex_and_excess_non_decreasing() {
        for env in variants() {
            let h = 1e-3;
            let mut prev_excess = env.excess(0.0);
            for i in -50..=50 {
                let beta = i as f64 * 0.1;
                let second = env.lambda(beta + h) - 2.0 * env.lambda(beta) + env.lambda(beta - h);
                assert!(second / (h * h) >= -1e-9);
                if beta > 0.0 {
                    let e = env.excess(beta);
                    assert!(e >= prev_excess - 1e-12);
                    prev_excess = e;
                }
            }
        }
    }

    #[test]
    fn bernoulli_excess_approaches_atom_entropy() {
        for p in [0.1, 0.5] {
            let env = EnvironmentLaw::bernoulli(p).unwrap();
            assert!((env.excess(50.0) - (1.0 / p).ln()).abs() < 1e-9);
        }
        let d = EnvironmentLaw::discrete(vec![(0.0, 0.9), (1.0, 0.1)]).unwrap();
        assert!((d.excess(100.0) - 10f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn tilted_mean_identity() {
        for env in variants() {
            for beta in [0.5, 1.0, 2.0, 4.0] {
                let mut rng = replica_rng(11, Stream::Tilt, 0);
                let acc: Accumulator = (0..100_000).map(|_| env.tilted_sample(beta, &mut rng)).collect();
                let est = acc.estimate();
                assert!(
                    (est.mean - env.lambda_prime(beta)).abs() <= 4.0 * est.stderr.max(1e-12),
                    "{env:?} beta={beta}"
                );
            }
        }
    }

    #[test]
    fn tilted_bernoulli_atom() {
        let env = EnvironmentLaw::bernoulli(0.3).unwrap();
        let mut rng = replica_rng(5, Stream::Tilt, 1);
        let n = 100_000;
        let ones = (0..n).filter(|_| env.tilted_sample(2.0, &mut rng) == 1.0).count();
        let e2 = 2f64.exp();
        let target = 0.3 * e2 / (0.7 + 0.3 * e2);
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - target).abs() <= 4.0 * se);
    }

    #[test]
    fn diagnostics() {
        let b = EnvironmentLaw::bernoulli(0.5).unwrap();
        let rows = b.limit_diagnostics(&[1.0, 10.0, 40.0], 0.5).unwrap();
        assert!(rows[2].prob_below <= 1e-15);
        assert!(b.limit_diagnostics(&[1.0], 1.0).is_err());
        let g = EnvironmentLaw::Gaussian.limit_diagnostics(&[1.0, 10.0, 100.0], 3.0).unwrap();
        assert_eq!(g[2].lambda_prime, 100.0);
        assert!(g[0].target_sup.is_infinite());
    }

    #[test]
    fn rejects_malformed_atoms() {
        assert!(EnvironmentLaw::discrete(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(EnvironmentLaw::discrete(vec![(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(EnvironmentLaw::bernoulli(1.0).is_err());
    }
}
