use std::sync::OnceLock;

use sobol::params::JoeKuoD6;
use sobol::Sobol;

use super::rng::RngStream;
use crate::error::{Error, Result};

const BITS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    PseudoRandom,
    ScrambledNet,
}

/// `m` points in `[0,1)^s`, stored row-major.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub m: usize,
    pub s: usize,
    pub kind: PointKind,
    pub scramble_seed: u64,
    pub points: Vec<f64>,
}

impl PointSet {
    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.s..(j + 1) * self.s]
    }
}

fn joe_kuo() -> &'static JoeKuoD6 {
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::standard)
}

/// Base-2 Sobol' net (Joe–Kuo direction numbers) with hash-based nested
/// uniform scrambling applied per coordinate.
#[derive(Debug, Clone)]
pub struct SobolNet {
    dims: usize,
    directions: Vec<[u32; BITS]>,
}

impl SobolNet {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Config("digital net needs at least one dimension".into()));
        }
        let params = joe_kuo();
        if dims > params.max_dims {
            return Err(Error::Config(format!(
                "digital net supports at most {} dimensions, asked for {dims}",
                params.max_dims
            )));
        }
        let raw = Sobol::<u32>::init_direction_vals::<u32>(dims, BITS, params);
        let directions = raw
            .into_iter()
            .map(|v| {
                let mut a = [0u32; BITS];
                a.copy_from_slice(&v);
                a
            })
            .collect();
        Ok(SobolNet { dims, directions })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// First `m` points in Gray-code order, scrambled, written row-major
    /// into `out` (length `m * dims`). Every prefix of length `2^k` is a
    /// digital net, and so is the second half of it.
    pub fn fill_scrambled(&self, m: usize, scramble_seed: u64, out: &mut [f64]) {
        debug_assert!(out.len() >= m * self.dims);
        let s = self.dims;
        let seeds: Vec<u32> = (0..s)
            .map(|k| (splitmix64(scramble_seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) >> 32) as u32)
            .collect();
        let mut state = vec![0u32; s];
        for j in 0..m {
            if j > 0 {
                let bit = j.trailing_zeros() as usize;
                for (x, dir) in state.iter_mut().zip(&self.directions) {
                    *x ^= dir[bit];
                }
            }
            let row = &mut out[j * s..(j + 1) * s];
            for ((o, &x), &seed) in row.iter_mut().zip(&state).zip(&seeds) {
                *o = to_unit(nested_uniform_scramble(x, seed));
            }
        }
    }

    /// Unscrambled integer coordinates of point `j` in Gray-code order.
    pub fn raw_point(&self, j: usize) -> Vec<u32> {
        let gray = j ^ (j >> 1);
        self.directions
            .iter()
            .map(|dir| {
                (0..BITS)
                    .filter(|b| (gray >> b) & 1 == 1)
                    .fold(0u32, |acc, b| acc ^ dir[b])
            })
            .collect()
    }
}

/// Randomized net of `m = 2^k` points in `s` dimensions.
pub fn scrambled_net(m: usize, s: usize, scramble_seed: u64) -> Result<PointSet> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::Config(format!("net size must be a power of 2, got {m}")));
    }
    let net = SobolNet::new(s)?;
    let mut points = vec![0.0; m * s];
    net.fill_scrambled(m, scramble_seed, &mut points);
    Ok(PointSet { m, s, kind: PointKind::ScrambledNet, scramble_seed, points })
}

/// `m` i.i.d. uniform points from `stream`.
pub fn pseudo_random_points(m: usize, s: usize, stream: &mut RngStream) -> PointSet {
    let points = (0..m * s).map(|_| stream.uniform()).collect();
    PointSet { m, s, kind: PointKind::PseudoRandom, scramble_seed: stream.seed(), points }
}

#[inline]
fn to_unit(x: u32) -> f64 {
    (x as f64 + 0.5) * (1.0 / 4_294_967_296.0)
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Laine–Karras style hash; in bit-reversed order each output bit depends
/// only on input bits of lower significance, i.e. on the coarser digits of
/// the original value. That makes it a nested (Owen-type) permutation.
#[inline]
fn lk_hash(mut x: u32, seed: u32) -> u32 {
    x = x.wrapping_add(seed);
    x ^= x.wrapping_mul(0x6c50_b47c);
    x ^= x.wrapping_mul(0xb82f_1e52);
    x ^= x.wrapping_mul(0xc7af_e638);
    x ^= x.wrapping_mul(0x8d22_f6e6);
    x
}

#[inline]
fn nested_uniform_scramble(x: u32, seed: u32) -> u32 {
    lk_hash(x.reverse_bits(), seed).reverse_bits()
}
