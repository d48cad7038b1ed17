//! Randomized comparison of the active-set NNLS solver against exhaustive enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::nnls::{nnls, NnlsProblem, DEFAULT_TOL};

/// Least squares on the columns in `support` via Gaussian elimination with partial pivoting.
fn restricted_ls(p: &NnlsProblem, support: &[usize]) -> Option<Vec<f64>> {
    let (gtg, gtc) = p.normal_equations();
    let k = support.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[r][c] = gtg[(i, j)];
        }
        a[r][k] = gtc[i];
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..=k {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * z[c]).sum();
        z[r] = (a[r][k] - s) / a[r][r];
    }
    let mut x = vec![0.0; p.g.cols()];
    for (r, &i) in support.iter().enumerate() {
        x[i] = z[r];
    }
    Some(x)
}

/// Minimum objective over all supports whose least-squares solution is nonnegative.
pub fn brute_force_objective(p: &NnlsProblem) -> f64 {
    let n = p.g.cols();
    let mut best = p.objective(&vec![0.0; n]);
    for mask in 1u64..(1u64 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if let Some(x) = restricted_ls(p, &support) {
            if x.iter().all(|&v| v >= -1e-12) {
                let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                best = best.min(p.objective(&clipped));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub problems: usize,
    pub max_rel_gap: f64,
    pub failures: Vec<String>,
}

/// Solves `count` random problems with up to `max_vars` (at most 16) variables.
pub fn nnls_check(count: usize, max_vars: usize, seed: u64, rel_tol: f64) -> Result<CheckReport> {
    let max_vars = max_vars.clamp(1, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::default();
    for k in 0..count {
        let n = rng.random_range(1..=max_vars);
        let rows = rng.random_range(1..=n + 4);
        let g = DenseMatrix::from_fn(rows, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let c: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let p = NnlsProblem::new(g, c)?;
        let reference = brute_force_objective(&p);
        let got = match nnls(&p, DEFAULT_TOL) {
            Ok(x) => p.objective(&x),
            Err(e) => {
                report.failures.push(format!("problem {k}: {e}"));
                report.problems += 1;
                continue;
            }
        };
        let gap = (got - reference) / reference.abs().max(1e-12);
        report.max_rel_gap = report.max_rel_gap.max(gap);
        if gap > rel_tol {
            report
                .failures
                .push(format!("problem {k} ({rows}x{n}): objective {got} vs optimum {reference}"));
        }
        report.problems += 1;
    }
    Ok(report)
}
