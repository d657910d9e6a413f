//! Deterministic random streams.
//!
//! Everything random is drawn from ChaCha20 seeded with a `u64` and a
//! stream index, so a `(seed, stream)` pair regenerates bit-identical
//! samples on every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha20Rng;

/// Generator for stream `stream` of base seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix a base seed with a tag (splitmix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix of i.i.d. standard normals, filled in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| normal(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Uniform direction on the unit Frobenius sphere.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let g = gaussian_matrix(rng, rows, cols);
        let norm = g.norm();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// Haar-distributed `n x k` matrix with orthonormal columns (`k <= n`).
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= n, "cannot draw {k} orthonormal columns in dimension {n}");
    let g = gaussian_matrix(rng, n, k);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign convention diag(R) > 0 makes the distribution Haar
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-distributed `k x k` orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    random_orthonormal(rng, k, k)
}

/// Random matrix of rank at most `rank`, product of Gaussian factors,
/// normalised to unit Frobenius norm.
pub fn low_rank_unit<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    rank: usize,
) -> DMatrix<f64> {
    loop {
        let a = gaussian_matrix(rng, rows, rank);
        let b = gaussian_matrix(rng, cols, rank);
        let x = a * b.transpose();
        let norm = x.norm();
        if norm > 0.0 {
            return x / norm;
        }
    }
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = gaussian_matrix(&mut stream_rng(7, 0), 3, 3);
        let b = gaussian_matrix(&mut stream_rng(7, 0), 3, 3);
        let c = gaussian_matrix(&mut stream_rng(7, 1), 3, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn orthonormal_columns() {
        let q = random_orthonormal(&mut stream_rng(1, 0), 6, 3);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-13);
    }

    #[test]
    fn low_rank_has_requested_rank_and_unit_norm() {
        let x = low_rank_unit(&mut stream_rng(2, 0), 6, 5, 2);
        assert!((x.norm() - 1.0).abs() < 1e-14);
        let s = x.singular_values();
        let small = s.iter().filter(|v| **v < 1e-12).count();
        assert_eq!(small, 3);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
