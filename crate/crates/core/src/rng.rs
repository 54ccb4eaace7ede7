use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one RNG used for every seeded decision in the toolkit.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
