//! Splittable, seeded random streams.
//!
//! A [`RandomStream`] is a value: it names a position in a tree of
//! independent generators. Parallel Monte Carlo code splits a parent stream
//! by trial-chunk index so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    /// Child stream `index`. Distinct indices give statistically independent
    /// generators; the same `(parent, index)` always gives the same child.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03))),
        }
    }

    pub fn rng(&self) -> SimRng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

/// Run `total` trials split into fixed-size chunks, each chunk driven by its
/// own substream, in parallel. Results come back in chunk order, so a
/// sequential fold over them is schedule-independent.
pub(crate) fn par_chunks<T, F>(stream: RandomStream, total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng, u64) -> T + Sync,
{
    use rayon::prelude::*;
    let chunks = total.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let n = chunk.min(total - i * chunk);
            let mut rng = stream.substream(i).rng();
            f(&mut rng, n)
        })
        .collect()
}
