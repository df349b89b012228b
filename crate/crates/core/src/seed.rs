//! Seed derivation.
//!
//! Every random stream in the crate is seeded from one master seed. A
//! sub-seed is `splitmix64(master + GOLDEN · (index + 1))`, where `index`
//! is either a per-item counter (sample, video) or one of the [`Stream`]
//! tags below, so per-item streams never depend on iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

pub fn rng_for(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Purpose tags for sub-seeds of the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Prototypes = 0x100,
    Labeled = 0x101,
    Unlabeled = 0x102,
    Videos = 0x103,
    HeldOut = 0x104,
    Teacher = 0x200,
    Student = 0x201,
    SpatialLoop = 0x202,
    Baseline = 0x203,
    TemporalInit = 0x300,
    TemporalLoop = 0x301,
    Probe = 0x302,
}

impl Stream {
    pub fn seed(self, master: u64) -> u64 {
        derive_seed(master, self as u64)
    }
}
