//! Random instance builders shared by unit tests, integration tests and
//! benchmarks. Not part of the supported API.

use rand::Rng;

use rand::SeedableRng;

use crate::block::ThreeFieldSystem;
use crate::sparse::SparseMatrix;

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random matrix with roughly `density` of its entries stored.
pub fn random_sparse<R: Rng>(rng: &mut R, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random::<f64>() < density {
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &t).unwrap()
}

/// Random full-column-rank matrix: a scaled identity block on top of noise.
pub fn random_full_rank<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    density: f64,
) -> SparseMatrix {
    assert!(cols <= rows);
    let mut t = Vec::new();
    let stride = rows / cols;
    for j in 0..cols {
        t.push((j * stride, j, 2.0 + rng.random::<f64>()));
    }
    for i in 0..rows {
        for j in 0..cols {
            if i != j * stride && rng.random::<f64>() < density {
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &t).unwrap()
}

/// Symmetric, strictly diagonally dominant matrix with a tridiagonal
/// backbone plus random symmetric off-diagonal entries.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        if i + 1 < n {
            let v = rng.random_range(-1.0..-0.1);
            t.push((i, i + 1, v));
            t.push((i + 1, i, v));
        }
        for j in i + 2..n {
            if rng.random::<f64>() < density {
                let v = rng.random_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    let off = SparseMatrix::from_triplets(n, n, &t).unwrap();
    let diag: Vec<f64> = off
        .row_abs_sums()
        .iter()
        .map(|s| s + 0.5 + rng.random::<f64>())
        .collect();
    off.add_scaled(1.0, &SparseMatrix::from_diagonal(&diag))
        .unwrap()
}

/// Random valid system with optional positive P.
pub fn random_system(
    seed: u64,
    n_u: usize,
    n_q: usize,
    n_p: usize,
    with_p: bool,
) -> ThreeFieldSystem {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = random_spd(&mut rng, n_u, 0.2);
    let a = random_spd(&mut rng, n_q, 0.2);
    let pd: Vec<f64> = if with_p {
        random_vec(&mut rng, n_p).iter().map(|v| v.abs()).collect()
    } else {
        vec![0.0; n_p]
    };
    let q = random_sparse(&mut rng, n_u, n_p, 0.3);
    let b = random_sparse(&mut rng, n_q, n_p, 0.3);
    ThreeFieldSystem::new(k, a, SparseMatrix::from_diagonal(&pd), q, b, 1.0, 0.7).unwrap()
}
