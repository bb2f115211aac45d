//! Deterministic random streams for the simulator.
//!
//! Every source of randomness gets its own named stream so that consuming a
//! draw in one place never shifts the draws seen somewhere else. A stream's
//! initial state is derived by hashing a domain tag, the scenario seed and
//! the stream name; the sequence itself is SplitMix64, which is more than
//! good enough for workload shaping and has a trivially portable
//! implementation.

use sha2::{Digest as _, Sha256};

/// One independent SplitMix64 sequence.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    /// Derives the stream state from the scenario seed and a stream name:
    /// the first eight bytes, big-endian, of
    /// `SHA-256("flowchain/rng/v1" || seed_be || name)`.
    pub fn new(seed: u64, name: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"flowchain/rng/v1");
        hasher.update(seed.to_be_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        StreamRng {
            state: u64::from_be_bytes(first),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform index below `n`. Plain modulo: the bias at `n` this far below
    /// 2^64 is immaterial for workload shaping.
    pub fn pick(&mut self, n: usize) -> usize {
        assert!(n > 0, "pick from an empty range");
        (self.next_u64() % n as u64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_independent() {
        let mut a = StreamRng::new(42, "workload");
        let mut b = StreamRng::new(42, "workload");
        let mut c = StreamRng::new(42, "plan");
        let mut d = StreamRng::new(43, "workload");
        let first: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let second: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(first, second);
        assert_ne!(first, (0..8).map(|_| c.next_u64()).collect::<Vec<_>>());
        assert_ne!(first, (0..8).map(|_| d.next_u64()).collect::<Vec<_>>());
    }

    #[test]
    fn unit_draws_stay_in_range() {
        let mut rng = StreamRng::new(7, "test");
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn chance_tracks_probability() {
        let mut rng = StreamRng::new(11, "test");
        let hits = (0..20_000).filter(|_| rng.chance(0.3)).count();
        let rate = hits as f64 / 20_000.0;
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn pick_covers_all_buckets() {
        let mut rng = StreamRng::new(13, "test");
        let mut seen = [false; 5];
        for _ in 0..200 {
            seen[rng.pick(5)] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }
}
