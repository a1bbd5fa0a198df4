//! Seeded randomness. Every random draw in the crate comes from ChaCha8
//! (`rand_chacha::ChaCha8Rng`), whose output stream is fixed across
//! platforms for a given 64-bit seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{dot, Matrix};

pub type LabRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of instance `index` in a suite seeded with `seed` (one SplitMix64
/// step over the pair), so a single instance can be replayed on its own.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `n x d` matrix (n <= d) with orthonormal rows, by modified Gram-Schmidt
/// on Gaussian rows.
pub fn orthonormal_rows(rng: &mut impl Rng, n: usize, d: usize) -> Matrix {
    assert!(n <= d, "cannot fit {n} orthonormal rows in dimension {d}");
    loop {
        let mut m = gaussian_matrix(rng, n, d);
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let proj = dot(m.row(i), m.row(j));
                let prev = m.row(j).to_vec();
                for (c, p) in m.row_mut(i).iter_mut().zip(&prev) {
                    *c -= proj * p;
                }
            }
            let norm = dot(m.row(i), m.row(i)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for v in m.row_mut(i) {
                *v /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

/// Haar-like random orthogonal `n x n` matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    orthonormal_rows(rng, n, n)
}
