//! Seed derivation and the parallel replicate driver.
//!
//! Replicate `k` of a run with master seed `s` uses a Xoshiro256++ stream
//! seeded with `replicate_seed(s, k)`:
//!
//! ```text
//! replicate_seed(s, k) = mix64(s ^ mix64(k + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `mix64` is the SplitMix64 finaliser. Results are gathered in
//! replicate order, so a run is bit-reproducible regardless of the number of
//! worker threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type SimRng = Xoshiro256PlusPlus;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Replicate identity: master seed and replicate index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngContract {
    pub master: u64,
    pub index: u64,
}

impl RngContract {
    pub fn seed(&self) -> u64 {
        replicate_seed(self.master, self.index)
    }

    pub fn rng(&self) -> SimRng {
        SimRng::seed_from_u64(self.seed())
    }
}

/// Derives an independent master seed for a named sub-stream of a run.
pub fn substream(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(mix64(master), |acc, b| mix64(acc ^ u64::from(b)))
}

/// Runs `f` for replicates `0..n`, each with its own derived stream, and
/// returns the results in replicate order. The first failing replicate
/// aborts the run.
pub fn map_replicates<T, F>(n: usize, master: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|index| {
            let mut rng = RngContract {
                master,
                index: index as u64,
            }
            .rng();
            f(index, &mut rng).map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
