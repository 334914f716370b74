//! Counter-based random streams.
//!
//! Every draw in a run comes from one root seed. Each `(index, attempt,
//! role)` triple selects its own ChaCha20 stream, so the uniforms that decide
//! acceptance never share state with the proposal path or the bridge draws,
//! and a path can be re-proposed without disturbing any other path.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Path = 0,
    Uniforms = 1,
    Bridge = 2,
    Oracle = 3,
}

/// Largest attempt number that maps to a distinct stream.
pub const MAX_ATTEMPTS: u32 = 1 << 12;

/// Stream for `(index, attempt, role)` under `root`. `index` must stay below
/// 2^48.
pub fn stream(root: u64, index: u64, attempt: u32, role: Role) -> ChaCha20Rng {
    debug_assert!(index < 1 << 48);
    debug_assert!(attempt < MAX_ATTEMPTS);
    let mut rng = ChaCha20Rng::seed_from_u64(root);
    rng.set_stream((index << 16) | ((attempt as u64 & 0xfff) << 4) | role as u64);
    rng
}
