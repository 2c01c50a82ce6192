//! Counter-based random substreams.
//!
//! Every Monte-Carlo path (or boat, or training batch) gets its own ChaCha
//! stream keyed by `(seed, stream)`, so results never depend on how work is
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for a two-level key, e.g. (epoch, path).
pub fn substream2(seed: u64, outer: u64, inner: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(outer.wrapping_mul(0xD1B5_4A32_D192_ED03));
    substream(mixed, inner)
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
