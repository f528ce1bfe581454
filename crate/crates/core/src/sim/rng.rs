//! Seed splitting.
//!
//! Every random process in a run draws from its own ChaCha8 stream: the root
//! seed picks the key and `(kind << 32) | index` picks the stream. Adding a
//! node therefore leaves every other node's draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Placement = 1,
    Ambient = 2,
    Mac = 3,
    Arbitration = 4,
    Traffic = 5,
    Blockage = 6,
}

/// Independent generator for process `kind` of entity `index`.
pub fn stream_rng(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    assert!(index <= u32::MAX as u64, "stream index {index} exceeds 32 bits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 32) | index);
    rng
}
