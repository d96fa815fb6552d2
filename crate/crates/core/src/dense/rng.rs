use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded random stream. The same seed always yields the same draws,
/// independent of platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha20";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        Self::ALGORITHM
    }

    /// Independent child stream derived from this stream's seed and `index`.
    /// Does not advance `self`.
    pub fn fork(&self, index: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5151))))
    }

    pub fn uniform(&mut self) -> f64 {
        rand::Rng::gen::<f64>(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        rand::Rng::gen_range(&mut self.inner, 0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn exp1(&mut self) -> f64 {
        rand_distr::Exp1.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from `{v ≥ 0, ‖v‖₂ = 1}`: absolute values of a Gaussian
/// vector, normalized.
pub fn sample_unit_nonneg(rng: &mut RngStream, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal().abs()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Uniform draw from the probability simplex of dimension `d` (Dirichlet(1,…,1)).
pub fn sample_simplex(rng: &mut RngStream, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.exp1()).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.fork(3).next_u64(), b.fork(3).next_u64());
        assert_ne!(a.fork(3).next_u64(), a.fork(4).next_u64());
    }

    #[test]
    fn unit_nonneg_examples() {
        let mut rng = RngStream::new(7);
        assert_eq!(sample_unit_nonneg(&mut rng, 1), vec![1.0]);
        for _ in 0..1000 {
            let v = sample_unit_nonneg(&mut rng, 2);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(v.iter().all(|x| *x >= 0.0));
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_nonneg_is_coordinate_symmetric() {
        // Monte-Carlo: coordinate means agree within 3 standard errors.
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for _ in 0..n {
            let v = sample_unit_nonneg(&mut rng, 3);
            for k in 0..3 {
                sum[k] += v[k];
                sum_sq[k] += v[k] * v[k];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let se: Vec<f64> = (0..3)
            .map(|k| ((sum_sq[k] / n as f64 - mean[k] * mean[k]) / n as f64).sqrt())
            .collect();
        for a in 0..3 {
            for b in a + 1..3 {
                let tol = 3.0 * (se[a] * se[a] + se[b] * se[b]).sqrt();
                assert!((mean[a] - mean[b]).abs() < tol, "{mean:?}");
            }
        }
    }

    #[test]
    fn simplex_draws_sum_to_one() {
        let mut rng = RngStream::new(1);
        for d in 1..10 {
            let v = sample_simplex(&mut rng, d);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
