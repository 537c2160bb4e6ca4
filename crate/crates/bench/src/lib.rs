//! Fixtures shared by the benchmarks.

use hcfr_core::{LabelSpace, LevelDistributions, SparseVec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random normalized distributions over every level of `space`.
pub fn random_distributions(space: &LabelSpace, seed: u64) -> LevelDistributions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LevelDistributions(
        space
            .alphabet_sizes()
            .iter()
            .map(|&k| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-6).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect(),
    )
}

/// Sparse input with `nnz` random active coordinates.
pub fn random_input(dim: usize, nnz: usize, seed: u64) -> SparseVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = vec![0.0; dim];
    for _ in 0..nnz {
        dense[rng.gen_range(0..dim)] = rng.gen_range(0.0..1.0);
    }
    SparseVec::from_dense(&dense)
}
