//! Reference implementations written independently of the library, shared by
//! the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod color;
pub mod npmi;
pub mod sim;
pub mod solver;
pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
