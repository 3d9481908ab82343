//! Seeded random streams and the handful of distributions the simulator draws from.
//!
//! Every module owns its own [`RngStream`], derived from the run's master seed
//! and a short label. Adding draws to one stream never shifts another, so a new
//! consumer cannot perturb the trajectories of existing ones.
//!
//! The samplers are backed by `rand_distr` (inversion / BTPE for the binomial,
//! PTRS for the Poisson, ziggurat for the normal) on top of ChaCha8, all pinned
//! through `Cargo.lock`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An independent pseudo-random substream keyed by `(seed, label)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        Self {
            seed,
            label: label.to_string(),
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// A stream for one `(label, key)` pair, e.g. a draw tied to an entity
    /// rather than to its position in a sequence. Runs that differ only in
    /// policy then share these draws (common random numbers).
    pub fn keyed(seed: u64, label: &str, key: &[u64]) -> Self {
        let mut full = String::from(label);
        for k in key {
            full.push('/');
            full.push_str(&k.to_string());
        }
        Self::new(seed, &full)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Samples `m` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        let m = m.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    }

    pub fn binomial(&mut self, n: u64, p: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Config(format!("binomial probability {p} outside [0, 1]")));
        }
        if n == 0 || p == 0.0 {
            return Ok(0);
        }
        if p == 1.0 {
            return Ok(n);
        }
        let dist = Binomial::new(n, p).map_err(|e| Error::Config(e.to_string()))?;
        Ok(dist.sample(&mut self.inner))
    }

    pub fn normal(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("normal sigma {sigma} must be finite and >= 0")));
        }
        if sigma == 0.0 {
            return Ok(mu);
        }
        let dist = Normal::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;
        Ok(dist.sample(&mut self.inner))
    }

    pub fn lognormal(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("lognormal sigma {sigma} must be finite and > 0")));
        }
        let dist = LogNormal::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;
        // Underflow to exactly zero is possible only for absurd mu; keep the support strict.
        Ok(dist.sample(&mut self.inner).max(f64::MIN_POSITIVE))
    }

    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("poisson rate {lambda} must be finite and >= 0")));
        }
        if lambda == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
        let k: f64 = dist.sample(&mut self.inner);
        Ok(k as u64)
    }
}

/// Free-function forms matching the kernel's operation names.
pub fn draw_binomial(rng: &mut RngStream, n: u64, p: f64) -> Result<u64> {
    rng.binomial(n, p)
}

pub fn draw_normal(rng: &mut RngStream, mu: f64, sigma: f64) -> Result<f64> {
    rng.normal(mu, sigma)
}

pub fn draw_lognormal(rng: &mut RngStream, mu: f64, sigma: f64) -> Result<f64> {
    rng.lognormal(mu, sigma)
}

pub fn draw_poisson(rng: &mut RngStream, lambda: f64) -> Result<u64> {
    rng.poisson(lambda)
}
