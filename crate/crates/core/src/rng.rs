//! Reproducible random streams.
//!
//! Every replication draws from its own ChaCha8 stream keyed by
//! `(seed, stream index)`, so results do not depend on how replications are
//! scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Generator identification written into run metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), stream per replication";

/// The `index`-th independent stream under `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes a label into a seed (splitmix64 finalizer), for carving independent
/// seed families out of one master seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(rep, rng)` for `rep in 0..reps` in parallel, each replication on
/// stream `rep` of `seed`. Output is in replication order.
pub fn par_replicate<T, F>(seed: u64, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep as u64);
            f(rep, &mut rng)
        })
        .collect()
}
