//! Seeded random streams with deterministic seed-splitting.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A reproducible random stream. Same seed and same call sequence give the
/// same draws; child streams depend only on the parent seed and a key.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `key`. Does not advance `self`.
    pub fn split(&self, key: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(key.wrapping_add(1))))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn standard_normal<T: Real>(&mut self) -> T {
        T::standard_normal(&mut self.rng)
    }

    /// `n` i.i.d. draws from `Normal(mean, variance)`.
    pub fn normal_vector<T: Real>(&mut self, n: usize, mean: T, variance: T) -> Result<Vec<T>> {
        if !(variance >= T::zero()) {
            return Err(Error::Domain(format!(
                "normal variance must be non-negative, got {variance}"
            )));
        }
        let sd = variance.sqrt();
        Ok((0..n)
            .map(|_| mean + sd * T::standard_normal(&mut self.rng))
            .collect())
    }

    /// Fills `out[i]` with a draw from `Normal(0, variances[i])`.
    pub fn normal_heteroscedastic<T: Real>(&mut self, variances: &[T], out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(variances) {
            *o = v.sqrt() * T::standard_normal(&mut self.rng);
        }
    }

    /// One draw from `Gamma(shape, rate)` (mean `shape / rate`).
    pub fn gamma_sample<T: Real>(&mut self, shape: T, rate: T) -> Result<T> {
        if !(shape > T::zero() && rate > T::zero()) || !shape.is_finite() || !rate.is_finite() {
            return Err(Error::Domain(format!(
                "gamma shape and rate must be positive, got shape={shape}, rate={rate}"
            )));
        }
        Ok(T::gamma(&mut self.rng, shape, rate))
    }

    /// Uniform permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.rng);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn degenerate_normal() {
        let mut s = RandomStream::new(1);
        assert_eq!(s.normal_vector(3, 5.0f64, 0.0).unwrap(), vec![5.0; 3]);
    }

    #[test]
    fn negative_variance_rejected() {
        let mut s = RandomStream::new(1);
        assert!(matches!(
            s.normal_vector(3, 0.0f64, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn normal_moments() {
        let mut s = RandomStream::new(3);
        let xs: Vec<f64> = s.normal_vector(100_000, 0.0, 4.0).unwrap();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 4.0).abs() < 0.15, "variance {v}");
    }

    #[test]
    fn same_seed_same_draws() {
        let a: Vec<f64> = RandomStream::new(42).normal_vector(50, 0.0, 1.0).unwrap();
        let b: Vec<f64> = RandomStream::new(42).normal_vector(50, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c: Vec<f64> = RandomStream::new(43).normal_vector(50, 0.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_independent_of_parent_position() {
        let mut parent = RandomStream::new(9);
        let child_before = parent.split(4);
        parent.next_u64();
        let child_after = parent.split(4);
        assert_eq!(child_before.seed(), child_after.seed());
        assert_ne!(parent.split(4).seed(), parent.split(5).seed());
    }

    #[test]
    fn gamma_moments() {
        let mut s = RandomStream::new(5);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| s.gamma_sample(1e4, 1e4).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.01);

        let xs: Vec<f64> = (0..100_000)
            .map(|_| s.gamma_sample(2.0, 0.5).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 4.0).abs() < 0.15);

        let xs: Vec<f64> = (0..100_000)
            .map(|_| s.gamma_sample(3.0, 1.0).unwrap())
            .collect();
        assert!((mean_var(&xs).1 - 3.0).abs() < 0.3);
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut s = RandomStream::new(5);
        assert!(s.gamma_sample(0.0f64, 1.0).is_err());
        assert!(s.gamma_sample(1.0f64, -1.0).is_err());
    }

    #[test]
    fn f32_draws_work() {
        let mut s = RandomStream::new(5);
        let g: f32 = s.gamma_sample(2.0f32, 1.0).unwrap();
        assert!(g > 0.0);
        let v: Vec<f32> = s.normal_vector(4, 1.0, 0.0).unwrap();
        assert_eq!(v, vec![1.0; 4]);
    }
}
