//! Seeded random substreams.
//!
//! Every random quantity is drawn from its own ChaCha8 stream, derived from
//! the master seed and a 64-bit stream id:
//!
//! ```text
//! id = purpose << 56 | a << 48 | b << 32 | c
//! ```
//!
//! where `(a, b, c)` are 8, 16 and 32 bit indices whose meaning depends on
//! the purpose (see [`Purpose`]). Toggling one purpose, e.g. enabling
//! shadowing, never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// `(cell, sp, user)` user drop inside the serving hexagon.
    Placement = 1,
    /// `(bs, 0, row)` log-normal shadowing of one user-BS link.
    Shadowing = 2,
    /// `(0, 0, row)` small-scale fading of one user row across all BSs.
    Fading = 3,
    /// Free for tests and diagnostics.
    Probe = 4,
}

pub fn stream_id(purpose: Purpose, a: usize, b: usize, c: usize) -> u64 {
    debug_assert!(a < 1 << 8 && b < 1 << 16 && c < 1 << 32);
    (purpose as u64) << 56
        | (a as u64 & 0xFF) << 48
        | (b as u64 & 0xFFFF) << 32
        | (c as u64 & 0xFFFF_FFFF)
}

pub fn substream(master_seed: u64, purpose: Purpose, a: usize, b: usize, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(purpose, a, b, c));
    rng
}
