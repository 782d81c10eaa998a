//! Deterministic random streams indexed by (base_seed, stream_index).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::special::acklam;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with an index into a new well-mixed seed.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN_GAMMA).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// One component of a normal mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Independent random stream for one replication (or one derived task).
#[derive(Debug, Clone)]
pub struct RngStream {
    base_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        let mut state = derive_seed(base_seed, stream_index);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        Self {
            base_seed,
            stream_index,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Child stream keyed by `tag`; independent of how much of `self` was consumed.
    pub fn substream(&self, tag: u64) -> RngStream {
        RngStream::new(derive_seed(self.base_seed, self.stream_index), tag)
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in 0..n.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform01() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal by inverse-CDF transform.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        acklam(self.uniform01())
    }

    pub fn sample_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> f64 {
        if self.uniform01() < p {
            1.0
        } else {
            0.0
        }
    }

    pub fn sample_bernoulli(&mut self, p: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Config(format!("Bernoulli probability {bad} outside [0, 1]")));
        }
        Ok(p.iter().map(|&q| self.bernoulli(q)).collect())
    }

    /// Allele count from Binomial(2, f).
    pub fn sample_binomial2(&mut self, f: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("allele frequency {f} outside [0, 1]")));
        }
        Ok(self.bernoulli(f) + self.bernoulli(f))
    }

    pub fn sample_uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid uniform range [{lo}, {hi}]")));
        }
        Ok(lo + (hi - lo) * self.uniform01())
    }

    pub fn sample_t(&mut self, df: f64) -> Result<f64> {
        let chi2 = Gamma::new(0.5 * df, 2.0)
            .map_err(|_| Error::Config(format!("t distribution needs df > 0, got {df}")))?;
        let z = self.normal();
        let v = chi2.sample(self);
        Ok(z / (v / df).sqrt())
    }

    pub fn sample_lognormal(&mut self, mu: f64, sigma2: f64) -> Result<f64> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("log-normal needs sigma2 > 0, got {sigma2}")));
        }
        Ok((mu + sigma2.sqrt() * self.normal()).exp())
    }

    pub fn sample_normal_mixture(&mut self, components: &[MixtureComponent]) -> Result<f64> {
        validate_mixture(components)?;
        let u = self.uniform01();
        let z = self.normal();
        let mut acc = 0.0;
        for c in components {
            acc += c.weight;
            if u < acc {
                return Ok(c.mean + c.sd * z);
            }
        }
        let last = components[components.len() - 1];
        Ok(last.mean + last.sd * z)
    }

    /// Poisson count; inversion for moderate means.
    pub fn sample_poisson(&mut self, mean: f64) -> Result<f64> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::Config(format!("Poisson mean must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(0.0);
        }
        if mean > 500.0 {
            let d = Poisson::new(mean).map_err(|e| Error::Config(e.to_string()))?;
            return Ok(d.sample(self));
        }
        let u = self.uniform01();
        let mut k = 0.0;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1.0;
            p *= mean / k;
            cdf += p;
            if p < 1e-300 && k > mean {
                break;
            }
        }
        Ok(k)
    }
}

pub fn validate_mixture(components: &[MixtureComponent]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::Config("normal mixture needs at least one component".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| c.weight < 0.0 || !(c.sd > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(
            "mixture weights must be non-negative and sum to 1, with sd > 0".into(),
        ));
    }
    Ok(())
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_distinct() {
        let a: Vec<f64> = RngStream::new(7, 3).sample_normal(100);
        let b: Vec<f64> = RngStream::new(7, 3).sample_normal(100);
        let c: Vec<f64> = RngStream::new(7, 4).sample_normal(100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s = RngStream::new(1, 2);
        let mut used = s.clone();
        used.uniform01();
        assert_eq!(s.substream(5).uniform01(), used.substream(5).uniform01());
    }

    #[test]
    fn degenerate_parameters() {
        let mut s = RngStream::new(1, 0);
        assert!(s.sample_bernoulli(&[0.0; 50]).unwrap().iter().all(|&v| v == 0.0));
        assert!((0..50).all(|_| s.sample_binomial2(1.0).unwrap() == 2.0));
        assert!(s.sample_t(0.0).is_err());
        assert!(s.sample_lognormal(0.0, -1.0).is_err());
        assert!(s.sample_binomial2(1.5).is_err());
        let bad = [MixtureComponent { weight: 0.5, mean: 0.0, sd: 1.0 }];
        assert!(s.sample_normal_mixture(&bad).is_err());
    }

    #[test]
    fn moments() {
        let mut s = RngStream::new(11, 0);
        let n = 200_000;
        let xs = s.sample_normal(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.015);
        let t: f64 = (0..n).map(|_| s.sample_t(4.0).unwrap().powi(2)).sum::<f64>() / n as f64;
        assert!((t - 2.0).abs() < 0.1, "t(4) variance {t}");
        let pm: f64 = (0..n).map(|_| s.sample_poisson(2.7).unwrap()).sum::<f64>() / n as f64;
        assert!((pm - 2.7).abs() < 0.02);
        let mix = [
            MixtureComponent { weight: 0.25, mean: -2.0, sd: 0.5 },
            MixtureComponent { weight: 0.75, mean: 2.0, sd: 0.5 },
        ];
        let mm: f64 = (0..n).map(|_| s.sample_normal_mixture(&mix).unwrap()).sum::<f64>() / n as f64;
        assert!((mm - 1.0).abs() < 0.02);
    }
}
