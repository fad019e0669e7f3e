//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! (seed, purpose, index). Ablation variants therefore see the same shuffles
//! and dropout masks, and a resumed run reproduces the remaining steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    HeadInit,
    Subset,
    Shuffle,
    Dropout,
    Noise,
    Eval,
    Synth,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::HeadInit => 1,
            Stream::Subset => 2,
            Stream::Shuffle => 3,
            Stream::Dropout => 4,
            Stream::Noise => 5,
            Stream::Eval => 6,
            Stream::Synth => 7,
        }
    }
}

/// Generator for `purpose` at position `index` (epoch, step, ...).
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose.tag() << 56) ^ (index & ((1 << 56) - 1)));
    rng
}
