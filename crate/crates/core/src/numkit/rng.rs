use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal::std_normal_inv_cdf_unchecked;

/// What a stream is used for. Part of the stream address so that outer
/// scenarios and inner batches never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Outer = 1,
    Inner = 2,
    Scramble = 3,
    Oracle = 4,
    Test = 5,
}

/// Injective packing of `(purpose, level, index)` into a 64-bit stream id:
/// 8 bits purpose, 8 bits level, 48 bits index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(pub u64);

impl StreamId {
    pub const MAX_INDEX: u64 = (1 << 48) - 1;

    pub fn new(purpose: Purpose, level: usize, index: u64) -> Self {
        assert!(level < 256, "level {level} does not fit the stream address");
        assert!(index <= Self::MAX_INDEX, "index {index} does not fit the stream address");
        StreamId(((purpose as u64) << 56) | ((level as u64) << 48) | index)
    }
}

/// A counter-based random stream. Draw `k` of stream `(seed, id)` is a pure
/// function of the triple, so any stream can be opened without
/// fast-forwarding a shared generator.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: StreamId) -> Self {
        Self::from_raw(seed, stream_id.0)
    }

    pub fn from_raw(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Reposition to the `draw`-th 64-bit output.
    pub fn seek(&mut self, draw: u64) {
        self.rng.set_word_pos(2 * draw as u128);
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of a uniform.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        std_normal_inv_cdf_unchecked(self.uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.normal();
        }
    }
}

/// `n` i.i.d. standard normals from the current position of `stream`.
pub fn normal_vector(stream: &mut RngStream, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    stream.fill_normal(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_bit_exact() {
        let id = StreamId::new(Purpose::Inner, 3, 12345);
        let a = normal_vector(&mut RngStream::new(7, id), 100);
        let b = normal_vector(&mut RngStream::new(7, id), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn seek_addresses_draws() {
        let id = StreamId::new(Purpose::Outer, 0, 9);
        let mut s = RngStream::new(1, id);
        let all: Vec<u64> = (0..20).map(|_| s.next_u64()).collect();
        let mut t = RngStream::new(1, id);
        t.seek(13);
        assert_eq!(t.next_u64(), all[13]);
    }

    #[test]
    fn stream_ids_are_injective() {
        let a = StreamId::new(Purpose::Outer, 1, 2);
        let b = StreamId::new(Purpose::Inner, 1, 2);
        let c = StreamId::new(Purpose::Outer, 2, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let mut s = RngStream::new(42, StreamId::new(Purpose::Test, 0, 0));
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(5, StreamId::new(Purpose::Test, 0, 1));
        let mut b = RngStream::new(5, StreamId::new(Purpose::Test, 0, 2));
        let (mut sab, mut saa, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = (a.normal(), b.normal());
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - sa * sb / (nf * nf);
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "corr {corr}");
    }
}
