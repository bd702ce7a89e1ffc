//! Keyed random streams.
//!
//! Every random draw of the sampler comes from a stream that is a pure
//! function of `(seed, iteration, phase, group, coordinate)`. The realized
//! chain therefore does not depend on scheduling or worker count, and an
//! iteration can be replayed from a snapshot by rebuilding the same keys.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

/// Which update a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Phase {
    InitTableStick = 1,
    InitDishStick = 2,
    InitAtom = 3,
    InitCustomerSlice = 4,
    InitTableSlice = 5,
    TableStick = 10,
    DishStick = 11,
    Atom = 12,
    Dish = 13,
    Table = 14,
    ExtendTable = 20,
    ExtendDish = 21,
    ExtendDishForTable = 22,
    Generate = 30,
    Regenerate = 31,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all streams of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for one coordinate of one phase of one iteration.
    pub fn stream(&self, iteration: u64, phase: Phase, group: usize, coord: usize) -> Stream {
        let mut st = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut st),
            splitmix64(&mut st) ^ iteration,
            splitmix64(&mut st) ^ ((phase as u64) << 56 | group as u64),
            splitmix64(&mut st) ^ coord as u64,
        ];
        // One more mixing round so nearby keys decorrelate.
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            let mut s = w;
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
