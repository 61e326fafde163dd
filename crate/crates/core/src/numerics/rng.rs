use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Addressable random stream. The pair `(seed, stream_id)` fully determines
/// the sequence; ChaCha's stream counter keeps distinct ids independent, so
/// replication `r` of a resampling run can draw from stream `r` in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_address_same_draws() {
        let a: Vec<u64> = RandomStream::new(7, 3).rng().random_iter().take(16).collect();
        let b: Vec<u64> = RandomStream::new(7, 3).rng().random_iter().take(16).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_differ() {
        let a: Vec<u64> = RandomStream::new(7, 3).rng().random_iter().take(16).collect();
        let b: Vec<u64> = RandomStream::new(7, 4).rng().random_iter().take(16).collect();
        let c: Vec<u64> = RandomStream::new(8, 3).rng().random_iter().take(16).collect();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 20_000;
        let a: Vec<f64> = RandomStream::new(1, 0).rng().random_iter().take(n).collect();
        let b: Vec<f64> = RandomStream::new(1, 1).rng().random_iter().take(n).collect();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        // correlation of independent uniforms has sd 1/sqrt(n)
        assert!((cov * 12.0).abs() < 4.0 / (n as f64).sqrt());
    }
}
