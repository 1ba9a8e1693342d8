//! Seed-derived random streams.
//!
//! One experiment seed feeds several independent ChaCha streams so that each
//! consumer's draws do not shift when another consumer draws more or less:
//!
//! | stream            | consumer                                  |
//! |-------------------|-------------------------------------------|
//! | 0                 | initial labeled set                       |
//! | 1                 | random selection, one draw per iteration  |
//! | 2 + 16·it + slot  | optimizer restarts of model `slot` at `it` |
//!
//! Slot 0 is the main model, committee members use slots 1 and up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MAX_MODEL_SLOTS: u64 = 16;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn initial_set(seed: u64) -> ChaCha8Rng {
    stream(seed, 0)
}

pub fn selection(seed: u64) -> ChaCha8Rng {
    stream(seed, 1)
}

pub fn restarts(seed: u64, iteration: usize, slot: usize) -> ChaCha8Rng {
    assert!((slot as u64) < MAX_MODEL_SLOTS, "model slot {slot} out of range");
    stream(seed, 2 + MAX_MODEL_SLOTS * iteration as u64 + slot as u64)
}
