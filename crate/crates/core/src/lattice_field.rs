//! Stateless random environment on ℕ × ℤ.

use std::collections::HashMap;
use std::sync::Arc;

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::rng::{bits_to_open_unit, derive_seed, mix3, Stream};

/// `ω_{n,z}` as a pure function of `(seed, n, z)`, with an optional finite
/// overlay of replaced sites.
#[derive(Clone, Debug)]
pub struct LatticeField {
    seed: u64,
    key: u64,
    env: EnvironmentLaw,
    overlay: Option<Arc<HashMap<(u64, i64), f64>>>,
}

impl LatticeField {
    pub fn new(seed: u64, env: EnvironmentLaw) -> Self {
        LatticeField {
            seed,
            key: derive_seed(seed, Stream::Field, 0),
            env,
            overlay: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn env(&self) -> &EnvironmentLaw {
        &self.env
    }

    /// The uniform behind site `(n, z)` of the base field.
    #[inline]
    pub fn uniform(&self, n: u64, z: i64) -> f64 {
        bits_to_open_unit(mix3(self.key, n, z as u64))
    }

    #[inline]
    pub fn base_value(&self, n: u64, z: i64) -> f64 {
        self.env.from_uniform(self.uniform(n, z))
    }

    pub fn value(&self, n: u64, z: i64) -> f64 {
        if let Some(v) = self.overlay.as_ref().and_then(|o| o.get(&(n, z))) {
            return *v;
        }
        self.base_value(n, z)
    }

    /// Fills `out[k] = ω_{n, z0 + k}`.
    pub fn row(&self, n: u64, z0: i64, out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.base_value(n, z0 + k as i64);
        }
        if let Some(o) = &self.overlay {
            let z1 = z0 + out.len() as i64;
            for (&(m, z), v) in o.iter() {
                if m == n && z >= z0 && z < z1 {
                    out[(z - z0) as usize] = *v;
                }
            }
        }
    }

    /// Field with `ω_{k, path[k-1]}` replaced by `values[k-1]` for `k = 1..=len`.
    pub fn with_path_overlay(&self, path: &[i64], values: &[f64]) -> Result<LatticeField> {
        if path.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: path.len(),
                right: values.len(),
            });
        }
        let mut map = self.overlay.as_deref().cloned().unwrap_or_default();
        for (k, (&z, &v)) in path.iter().zip(values).enumerate() {
            map.insert((k as u64 + 1, z), v);
        }
        let mut out = self.clone();
        out.overlay = if map.is_empty() { None } else { Some(Arc::new(map)) };
        Ok(out)
    }

    /// Field with arbitrary sites `((n, z), value)` replaced.
    pub fn with_sites(&self, sites: &[((u64, i64), f64)]) -> LatticeField {
        let mut map = self.overlay.as_deref().cloned().unwrap_or_default();
        map.extend(sites.iter().copied());
        let mut out = self.clone();
        out.overlay = if map.is_empty() { None } else { Some(Arc::new(map)) };
        out
    }

    pub fn overlay_len(&self) -> usize {
        self.overlay.as_ref().map_or(0, |o| o.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_1pct, ks_statistic, Accumulator};

    #[test]
    fn deterministic_and_overlay() {
        let f = LatticeField::new(3, EnvironmentLaw::Gaussian);
        assert_eq!(f.value(2, -7), f.value(2, -7));
        let g = f.with_path_overlay(&[5, 9, 0], &[1.0, 2.0, 7.5]).unwrap();
        assert_eq!(g.value(3, 0), 7.5);
        assert_eq!(g.value(1, 5), 1.0);
        assert_eq!(g.value(3, 1), f.value(3, 1));
        assert_eq!(f.overlay_len(), 0);
        let same = f.with_path_overlay(&[], &[]).unwrap();
        assert_eq!(same.value(4, 4), f.value(4, 4));
        assert!(f.with_path_overlay(&[1], &[]).is_err());
    }

    #[test]
    fn row_matches_pointwise() {
        let f = LatticeField::new(9, EnvironmentLaw::Gaussian)
            .with_path_overlay(&[2, -1], &[10.0, 11.0])
            .unwrap();
        let mut row = vec![0.0; 9];
        for n in 1..=2 {
            f.row(n, -4, &mut row);
            for (k, v) in row.iter().enumerate() {
                assert_eq!(*v, f.value(n, -4 + k as i64));
            }
        }
    }

    #[test]
    fn marginal_ks() {
        let f = LatticeField::new(1234, EnvironmentLaw::Gaussian);
        let mut xs: Vec<f64> = (0..100_000).map(|z| f.value(1, z)).collect();
        let d = ks_statistic(&mut xs, |x| EnvironmentLaw::Gaussian.cdf(x));
        assert!(d < ks_critical_1pct(100_000), "{d}");
    }

    #[test]
    fn adjacent_pairs_uncorrelated() {
        let f = LatticeField::new(77, EnvironmentLaw::Gaussian);
        let n = 100_000;
        let prods: Accumulator = (0..n).map(|z| f.value(5, z) * f.value(5, z + 1)).collect();
        let est = prods.estimate();
        assert!(est.mean.abs() <= 4.0 * est.stderr, "{est:?}");
        let vertical: Accumulator = (0..n).map(|z| f.value(5, z) * f.value(6, z)).collect();
        let est = vertical.estimate();
        assert!(est.mean.abs() <= 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn query_order_and_seed_separation() {
        let env = EnvironmentLaw::bernoulli(0.5).unwrap();
        let f = LatticeField::new(1, env.clone());
        let g = LatticeField::new(2, env);
        let forward: Vec<f64> = (0..10_000).map(|z| f.value(3, z)).collect();
        let backward: Vec<f64> = (0..10_000).rev().map(|z| f.value(3, z)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        let agree = (0..10_000).filter(|&z| f.value(3, z) == g.value(3, z)).count();
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!((agree as f64 / 10_000.0 - 0.5).abs() <= 4.0 * se);
    }
}
