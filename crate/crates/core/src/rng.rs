//! Deterministic random streams keyed by a master seed and a label path.
//!
//! Every source of randomness in the workspace is a [`RandomStream`] derived
//! from a master [`Seed`] and a path of `(label, index)` pairs, e.g.
//! `[("instance", 7)]`. The draw sequence is a pure function of
//! `(seed, label path, draw index)`, so results do not depend on scheduling
//! order or thread count.
//!
//! Generator: PCG (XSL-RR-128/64, MCG variant, `rand_pcg::Pcg64Mcg`) seeded
//! from a SplitMix64 digest of the label path. Standard normals use the
//! ziggurat method from `rand_distr`. The same seed therefore reproduces the
//! same episodes across builds of this repo; bit-equality across unrelated
//! implementations is not promised.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;

use crate::error::{Error, Result};

/// Master seed for a whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

/// Index of an arm, in `[0, K)` for the instance at hand.
pub type ArmIndex = usize;

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; the standard avalanche used to spread key bits.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds one `(label, index)` pair into a running key digest.
fn absorb(mut key: u64, label: &str, index: u64) -> u64 {
    for &b in label.as_bytes() {
        key = mix64(key.wrapping_add(SPLITMIX_GAMMA) ^ u64::from(b));
    }
    // Length tag separates ("ab", i) from ("a", b...)-style collisions.
    key = mix64(key.wrapping_add(SPLITMIX_GAMMA) ^ (label.len() as u64));
    mix64(key.wrapping_add(SPLITMIX_GAMMA) ^ index)
}

/// A deterministic stream of random draws tied to one label path.
///
/// Child streams derive from the path digest, not from the generator state,
/// so deriving a child is unaffected by how many draws were already taken.
#[derive(Clone, Debug)]
pub struct RandomStream {
    key: u64,
    rng: Pcg64Mcg,
}

impl RandomStream {
    fn from_key(key: u64) -> Self {
        RandomStream { key, rng: Pcg64Mcg::seed_from_u64(key) }
    }

    /// Derives the stream for `(label, index)` appended to this stream's path.
    pub fn child(&self, label: &str, index: u64) -> RandomStream {
        RandomStream::from_key(absorb(self.key, label, index))
    }

    /// Uniform double in `[0, 1)` with 53-bit precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[0, bound)`.
    #[inline]
    pub fn next_below(&mut self, bound: usize) -> usize {
        self.rng.gen_range(0..bound)
    }

    /// Standard normal draw (ziggurat).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Bernoulli draw with success probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Beta(alpha, beta) draw; parameters must be positive and finite.
    #[inline]
    pub fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        rand_distr::Beta::new(alpha, beta)
            .expect("beta parameters must be positive and finite")
            .sample(&mut self.rng)
    }

    /// Gamma(shape, scale) draw; parameters must be positive and finite.
    #[inline]
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        rand_distr::Gamma::new(shape, scale)
            .expect("gamma parameters must be positive and finite")
            .sample(&mut self.rng)
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Derives the stream for a label path under a master seed.
///
/// Streams with different paths (or seeds) are statistically independent.
pub fn derive_stream(master: Seed, labels: &[(&str, u64)]) -> RandomStream {
    assert!(!labels.is_empty(), "label path must be non-empty");
    let mut key = mix64(master.0 ^ SPLITMIX_GAMMA);
    for &(label, index) in labels {
        key = absorb(key, label, index);
    }
    RandomStream::from_key(key)
}

/// Index of the maximum value; ties broken uniformly at random.
pub fn argmax_tiebreak(values: &[f64], rng: &mut RandomStream) -> Result<ArmIndex> {
    assert!(!values.is_empty(), "argmax over empty slice");
    let mut best = f64::NEG_INFINITY;
    let mut ties = 0usize;
    let mut first = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NanInArgmax);
        }
        if v > best {
            best = v;
            ties = 1;
            first = i;
        } else if v == best {
            ties += 1;
        }
    }
    if ties == 1 {
        return Ok(first);
    }
    let mut pick = rng.next_below(ties);
    for (i, &v) in values.iter().enumerate().skip(first) {
        if v == best {
            if pick == 0 {
                return Ok(i);
            }
            pick -= 1;
        }
    }
    unreachable!("tie count mismatch");
}
