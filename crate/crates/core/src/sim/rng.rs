use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded random source.
///
/// Backed by ChaCha8 (`rand_chacha`), a counter-based generator whose output
/// is specified bit-for-bit and independent of platform and endianness. The
/// 64-bit seed is expanded to the 256-bit key with `SeedableRng::seed_from_u64`
/// (PCG32 expansion). Independent sub-streams of one seed use ChaCha's 64-bit
/// stream id, so components can draw without perturbing each other.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        self.rng.random_range(lo..=hi)
    }

    /// `true` with probability `p`. Always consumes exactly one draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RandomSource::new(7);
        let mut b = RandomSource::new(7);
        for _ in 0..1_000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RandomSource::with_stream(7, 0);
        let mut b = RandomSource::with_stream(7, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.uniform_u64(0, u64::MAX)).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.uniform_u64(0, u64::MAX)).collect();
        assert_ne!(xs, ys);
    }

    // Pins the generator so a dependency bump that changes the stream is caught.
    #[test]
    fn stream_is_pinned() {
        let mut rng = RandomSource::new(0);
        let first: Vec<u64> = (0..3).map(|_| rng.uniform_u64(0, u64::MAX)).collect();
        let mut again = RandomSource::new(0);
        let second: Vec<u64> = (0..3).map(|_| again.uniform_u64(0, u64::MAX)).collect();
        assert_eq!(first, second);
        assert_eq!(first, PINNED_SEED0);
    }

    const PINNED_SEED0: [u64; 3] = [
        13080132717333068652,
        8594738769458413623,
        12896916468484187878,
    ];

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = RandomSource::new(3);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
