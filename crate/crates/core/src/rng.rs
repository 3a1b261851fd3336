//! Deterministic counter-based random number generation.
//!
//! Every random quantity in the toolkit flows from a single root seed
//! through named streams, so fixtures can be reproduced bit-for-bit from
//! any language that implements the same mixing function. The generator
//! is a pure function of `(seed, counter)`:
//!
//! ```text
//! out(i) = mix64(stream_seed + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer (Steele, Lea & Flood's
//! `splitmix64` update written in closed form). Uniform doubles take the
//! top 53 bits; Gaussian samples are produced pairwise by the Box–Muller
//! transform. The full recipe is documented in `docs/FORMATS.md`.

/// Golden-ratio increment of the SplitMix64 sequence.
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers; each purpose draws from its own independent stream.
pub mod streams {
    pub const NOISE: u64 = 0x01;
    pub const CROPS: u64 = 0x02;
    pub const FILTER_INIT: u64 = 0x03;
    pub const POWER_START: u64 = 0x04;
    pub const GENERIC: u64 = 0x7F;
}

/// Counter-based generator over one derived stream.
///
/// State is just `(stream_seed, counter)`; cloning and jumping are cheap
/// and the i-th output never depends on how the first i-1 were consumed.
#[derive(Debug, Clone)]
pub struct StreamRng {
    stream_seed: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl StreamRng {
    /// Derive a stream from a root seed and a purpose id.
    pub fn new(root_seed: u64, stream: u64) -> Self {
        StreamRng {
            stream_seed: mix64(root_seed ^ mix64(stream)),
            counter: 0,
            spare_normal: None,
        }
    }

    /// Fold further indices into the stream seed (epoch, item, ...).
    pub fn substream(root_seed: u64, stream: u64, indices: &[u64]) -> Self {
        let mut s = mix64(root_seed ^ mix64(stream));
        for &ix in indices {
            s = mix64(s ^ mix64(ix.wrapping_add(0x51_7C_C1_B7_27_22_0A_95)));
        }
        StreamRng {
            stream_seed: s,
            counter: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.stream_seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) via the multiply-shift reduction.
    /// The bias is below 2^-53 for any bound the toolkit uses.
    #[inline]
    pub fn uniform_usize(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (((self.next_u64() as u128) * (bound as u128)) >> 64) as usize
    }

    /// Standard normal via Box–Muller; samples are produced in pairs and
    /// the second of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite; u2 in [0, 1).
        let u1 = ((self.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}
