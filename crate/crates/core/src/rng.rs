//! The one seeded generator used everywhere randomness is needed.
//!
//! ChaCha8 from `rand_chacha`, seeded through `SeedableRng::seed_from_u64`.
//! Its output stream is fixed by the algorithm, so a given seed produces the
//! same datasets on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
