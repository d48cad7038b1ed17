//! Shared fixtures and independent reference computations for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nmf_accel::linalg::{DenseMatrix, Matrix, SparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Strictly positive entries in `[0.1, 1.1)`.
pub fn rand_positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| 0.1 + rng.random::<f64>())
}

pub fn rand_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random_bool(density) {
                t.push((i, j, rng.random::<f64>()));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `||M − WH||_F` by forming the residual in nalgebra.
pub fn residual_na(m: &Matrix, w: &DenseMatrix, h: &DenseMatrix) -> f64 {
    (to_na(&m.to_dense()) - to_na(w) * to_na(h)).norm()
}

/// `||G x − c||²` in nalgebra.
pub fn objective_na(g: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (g * x - c).norm_squared()
}

/// Exhaustive NNLS: least squares on every support, keeping feasible solutions.
pub fn brute_force_nnls(g: &DMatrix<f64>, c: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = g.ncols();
    let mut best_x = DVector::zeros(n);
    let mut best = objective_na(g, c, &best_x);
    for mask in 1u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let gs = g.select_columns(&support);
        let Ok(z) = gs.clone().svd(true, true).solve(c, 1e-13) else {
            continue;
        };
        if z.iter().any(|&v| v < -1e-13) {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (k, &i) in support.iter().enumerate() {
            x[i] = z[k].max(0.0);
        }
        let f = objective_na(g, c, &x);
        if f < best {
            best = f;
            best_x = x;
        }
    }
    (best_x, best)
}

pub fn max_rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let scale = a.frob_norm().max(b.frob_norm()).max(f64::MIN_POSITIVE);
    a.max_abs_diff(b).unwrap() / scale
}
