//! Seeded, splittable random streams.
//!
//! Every stream is ChaCha20 keyed by `seed` (expanded with
//! `SeedableRng::seed_from_u64`). Independent substreams come from ChaCha's
//! 64-bit stream id, which we split as `purpose << 48 | index`. Drivers open a
//! fresh substream per iteration, so draws are conditionally independent
//! across iterations and a chain can be replayed from any mid-trajectory state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a substream is used for; substreams of different purposes never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Labels = 2,
    Params = 3,
    Kernel = 4,
    Simulation = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for `(purpose, index)`; `index` is usually the iteration number.
    pub fn substream(&self, purpose: Purpose, index: u64) -> ChaCha20Rng {
        assert!(index < 1 << 48, "substream index out of range");
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << 48) | index);
        rng
    }
}

/// 32-bit words drawn from a ChaCha generator so far.
pub fn words_used(rng: &ChaCha20Rng) -> u64 {
    rng.get_word_pos() as u64
}
