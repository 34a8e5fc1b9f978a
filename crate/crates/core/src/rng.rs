//! Order-independent random streams.
//!
//! Every random draw in the crate is addressed by `(seed, stream, t, replication)`.
//! The generator for an address is built fresh from a mixed 64-bit key, so the
//! value drawn at step `t` never depends on how many draws happened before it
//! or on which thread asked for it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness. The discriminant is mixed into the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Schedule = 1,
    Oracle = 2,
    Block = 3,
    Sampling = 4,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_key(seed: u64, stream: Stream, t: u64, replication: u64) -> u64 {
    let mut k = splitmix64(seed);
    k = splitmix64(k ^ (stream as u64));
    k = splitmix64(k ^ t);
    splitmix64(k ^ replication)
}

pub fn stream_rng(seed: u64, stream: Stream, t: u64, replication: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, stream, t, replication))
}
