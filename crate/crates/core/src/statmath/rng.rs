use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::normal::norm_quantile;

/// A reproducible random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha20 with the stream id in the cipher's nonce, so distinct
/// ids are independent keystreams of the same key and every replicate can
/// be regenerated on its own, on any platform, in any order.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion.
    pub fn standard_normal(&mut self) -> f64 {
        norm_quantile(self.uniform()).expect("uniform draw lies in (0, 1)")
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn frozen_first_draws() {
        // Pinned so that a change in the generator or its seeding shows up.
        let mut s = RngStream::new(20240101, 3);
        let first = s.next_u64();
        let mut again = RngStream::new(20240101, 3);
        assert_eq!(first, again.next_u64());
        assert_eq!(FROZEN_FIRST, first, "generator output changed");
    }

    const FROZEN_FIRST: u64 = 15_792_100_844_563_994_177;

    #[test]
    fn uniform_is_open() {
        let mut s = RngStream::new(1, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = RngStream::new(9, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal(1.5, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.5).abs() < 4.0 * 2.0 / (n as f64).sqrt());
        assert!((var - 4.0).abs() < 0.05);
    }

    #[test]
    fn cross_stream_correlation_is_small() {
        let n = 100_000;
        let mut a = RngStream::new(5, 10);
        let mut b = RngStream::new(5, 11);
        let r: f64 = (0..n)
            .map(|_| a.standard_normal() * b.standard_normal())
            .sum::<f64>()
            / n as f64;
        assert!(r.abs() < 4.0 / (n as f64).sqrt());
    }
}
