//! Keyed random substreams.
//!
//! Every random quantity in the toolkit is drawn from a stream identified by a
//! path of integers hashed from one master seed: `(seed, purpose, level, outer,
//! inner, ...)`. Streams never depend on scheduling, so parallel and sequential
//! runs produce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator used for every substream.
pub type StreamRng = ChaCha12Rng;

/// Purpose tags for the top-level stream families.
pub mod purpose {
    pub const OFFLINE_LAW: u64 = 0x4f46_464c;
    pub const LAW: u64 = 0x4c41_5721;
    pub const INNER: u64 = 0x494e_4e52;
    pub const PILOT: u64 = 0x5049_4c54;
    pub const BIAS: u64 = 0x4249_4153;
    pub const ESTIMATE: u64 = 0x4553_544d;
    pub const STUDY: u64 = 0x5354_4459;

    pub(crate) const INITIAL_STATE: u64 = 0x1;
    pub(crate) const PARAMETER: u64 = 0x2;
    pub(crate) const NOISE: u64 = 0x3;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifier of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(splitmix64(master_seed ^ 0x6d76_646c_6d63_0001))
    }

    /// Child stream `index` of this stream.
    #[inline]
    pub fn derive(self, index: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn derive_all(self, path: &[u64]) -> Self {
        path.iter().fold(self, |k, &i| k.derive(i))
    }

    pub fn rng(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut z = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
