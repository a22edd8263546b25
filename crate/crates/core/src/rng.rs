//! Seeded randomness.
//!
//! Every random draw in the crate comes from a `Xoshiro256PlusPlus` derived from the
//! run seed. Each consumer gets its own stream: the child seed is
//! `splitmix64(seed ^ (stream_id * 0x9E3779B97F4A7C15))`, which the generator then
//! expands with its own SplitMix64 seeding. Streams are fixed per purpose, so adding
//! draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::linalg::Matrix;

pub type RunRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    GeneratorInit = 2,
    ExtractorInit = 3,
    RealBatches = 4,
    Noise = 5,
    ProbeInit = 6,
    ProbeBatches = 7,
    Evaluation = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream_rng(seed: u64, stream: Stream) -> RunRng {
    let id = stream as u64;
    RunRng::seed_from_u64(splitmix64(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// `rows x cols` matrix of standard normal draws, filled row by row.
pub fn gaussian_matrix(rng: &mut RunRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
