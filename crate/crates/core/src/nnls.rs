//! Exact nonnegative least squares, used as a correctness oracle.
//!
//! Lawson–Hanson active-set method on the normal equations, with Cholesky
//! solves on the passive set. The entering variable is the one with the most
//! negative gradient component (lowest index on ties); once an active set
//! repeats, entering switches to the lowest eligible index.

use std::collections::HashSet;

use crate::error::{dim_err, NmfError, Result};
use crate::linalg::{frob_error_direct, gram, DataMatrix, DenseMatrix, Matrix};
use crate::updates::{Side, UpdateRule};

/// `min_{x >= 0} ||G x − c||`.
#[derive(Debug, Clone)]
pub struct NnlsProblem {
    /// Design matrix, observations x variables.
    pub g: DenseMatrix,
    /// Observations.
    pub c: Vec<f64>,
}

impl NnlsProblem {
    pub fn new(g: DenseMatrix, c: Vec<f64>) -> Result<Self> {
        if c.len() != g.rows() {
            return Err(dim_err("NnlsProblem", (g.rows(), 1), (c.len(), 1)));
        }
        Ok(Self { g, c })
    }

    /// `Gᵀ G` and `Gᵀ c`.
    pub fn normal_equations(&self) -> (DenseMatrix, Vec<f64>) {
        let gtg = crate::linalg::gram_cols(&self.g);
        let mut gtc = vec![0.0; self.g.cols()];
        for (i, &ci) in self.c.iter().enumerate() {
            for (acc, &gv) in gtc.iter_mut().zip(self.g.row(i)) {
                *acc += gv * ci;
            }
        }
        (gtg, gtc)
    }

    /// `||G x − c||²`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        (0..self.g.rows())
            .map(|i| {
                let fit: f64 = self.g.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                (fit - self.c[i]).powi(2)
            })
            .sum()
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Solves the problem; `tol` scales the KKT tolerance by `||Gᵀ c||`.
pub fn nnls(problem: &NnlsProblem, tol: f64) -> Result<Vec<f64>> {
    let (gtg, gtc) = problem.normal_equations();
    nnls_normal(&gtg, &gtc, tol)
}

/// Cholesky solve of `Q[P,P] z = q[P]` on the passive index set; `None` if not positive definite.
fn solve_passive(gtg: &DenseMatrix, gtc: &[f64], passive: &[usize]) -> Option<Vec<f64>> {
    let k = passive.len();
    let mut l = vec![0.0; k * k];
    let scale = passive.iter().map(|&p| gtg[(p, p)]).fold(0.0f64, f64::max);
    for i in 0..k {
        for j in 0..=i {
            let mut s = gtg[(passive[i], passive[j])];
            for t in 0..j {
                s -= l[i * k + t] * l[j * k + t];
            }
            if i == j {
                if s <= 1e-14 * scale {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = gtc[passive[i]];
        for t in 0..i {
            s -= l[i * k + t] * y[t];
        }
        y[i] = s / l[i * k + i];
    }
    let mut z = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for t in (i + 1)..k {
            s -= l[t * k + i] * z[t];
        }
        z[i] = s / l[i * k + i];
    }
    Some(z)
}

/// Active-set NNLS on the normal equations `min_{x>=0} ½ xᵀ Q x − qᵀ x` with
/// `Q = Gᵀ G`, `q = Gᵀ c`.
///
/// At most `3 * variables` variables enter the passive set; past that the
/// solver returns [`NmfError::NnlsCycling`] carrying the best feasible iterate.
/// With a rank-deficient `Q`, variables whose column is dependent on the
/// passive set are skipped, so the returned point is one of several minimizers.
pub fn nnls_normal(gtg: &DenseMatrix, gtc: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = gtc.len();
    if gtg.shape() != (n, n) {
        return Err(dim_err("nnls_normal", (n, n), gtg.shape()));
    }
    if !(tol > 0.0) {
        return Err(NmfError::InvalidConfig(format!("nnls tolerance must be > 0, got {tol}")));
    }
    let scale = gtc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if scale == 0.0 || n == 0 {
        return Ok(x);
    }
    let threshold = tol * scale;

    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut lowest_index_rule = false;
    let cap = 3 * n;
    let mut swaps = 0;

    let dual = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| gtc[j] - gtg.row(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let mut w = dual(&x);

    loop {
        let eligible = (0..n).filter(|&j| !passive[j] && !blocked[j] && w[j] > threshold);
        let entering = if lowest_index_rule {
            eligible.min()
        } else {
            eligible.fold(None, |best: Option<usize>, j| match best {
                Some(b) if w[b] >= w[j] => Some(b),
                _ => Some(j),
            })
        };
        let Some(j) = entering else { break };
        if swaps >= cap {
            return Err(NmfError::NnlsCycling { swaps, best: x });
        }
        swaps += 1;
        passive[j] = true;
        if !seen.insert(passive.clone()) {
            lowest_index_rule = true;
        }

        let mut first_solve = true;
        let mut moved = false;
        loop {
            let set: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = match solve_passive(gtg, gtc, &set) {
                Some(z) => z,
                None => {
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            };
            if first_solve {
                first_solve = false;
                let zj = z[set.iter().position(|&i| i == j).expect("entering index is passive")];
                if zj <= 0.0 {
                    // Round-off made the entering direction useless.
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in set.iter().zip(&z) {
                    x[i] = v;
                }
                moved = true;
                break;
            }
            // Step towards z until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            let mut hit = set[0];
            for (&i, &zi) in set.iter().zip(&z) {
                if zi <= 0.0 {
                    let a = x[i] / (x[i] - zi);
                    if a < alpha {
                        alpha = a;
                        hit = i;
                    }
                }
            }
            for (&i, &zi) in set.iter().zip(&z) {
                x[i] += alpha * (zi - x[i]);
            }
            x[hit] = 0.0;
            for &i in &set {
                if x[i] <= 0.0 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            moved = true;
        }
        if moved {
            blocked.iter_mut().for_each(|b| *b = false);
        }
        w = dual(&x);
    }
    Ok(x)
}

/// Largest KKT violation of `x` relative to `||Gᵀ c||`.
///
/// Zero for an exact solution: the gradient `Q x − q` vanishes on the support
/// and is nonnegative off it.
pub fn kkt_violation(gtg: &DenseMatrix, gtc: &[f64], x: &[f64]) -> f64 {
    let scale = gtc.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..gtc.len() {
        let grad: f64 = gtg.row(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - gtc[j];
        let v = if x[j] < 0.0 {
            f64::INFINITY
        } else if x[j] > 0.0 {
            grad.abs()
        } else {
            (-grad).max(0.0)
        };
        worst = worst.max(v / scale);
    }
    worst
}

/// `argmin_{W >= 0} ||M − W H||_F`, one NNLS problem per row of `M`.
pub fn nnls_factor<M: DataMatrix + ?Sized>(m: &M, h: &DenseMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    if h.cols() != cols {
        return Err(dim_err("nnls_factor", (h.rows(), cols), h.shape()));
    }
    if let Some(p) = (0..h.rows()).find(|&p| h.row(p).iter().all(|&v| v == 0.0)) {
        return Err(NmfError::Precondition(format!("row {p} of H is all zero")));
    }
    let b = gram(h);
    let a = m.right_product(h)?;
    let mut w = DenseMatrix::zeros(rows, h.rows());
    for i in 0..rows {
        let x = match nnls_normal(&b, a.row(i), DEFAULT_TOL) {
            Ok(x) => x,
            Err(NmfError::NnlsCycling { best, .. }) => {
                log::warn!("nnls cycling on row {i}; using best feasible iterate");
                best
            }
            Err(e) => return Err(e),
        };
        w.row_mut(i).copy_from_slice(&x);
    }
    Ok(w)
}

/// Relative inner error `E(l)` of successive updates of `W` with `H` fixed.
#[derive(Debug, Clone)]
pub struct InnerCurve {
    /// `E(0), ..., E(L)`.
    pub values: Vec<f64>,
    /// Optimal subproblem error from the oracle.
    pub e_min: f64,
    /// `||M − W_l H||_F` for each `l`.
    pub errors: Vec<f64>,
    /// The start was already optimal; `values` are all zero.
    pub degenerate: bool,
}

/// `E(l) = (e_l − e_min) / (e_0 − e_min)` for `l = 0..=steps`, with `e_min` from [`nnls_factor`].
///
/// Errors are evaluated entrywise so that small gaps near the optimum stay accurate.
/// Values slightly below zero from round-off are clamped to zero.
pub fn inner_error_curve(
    m: &Matrix,
    h: &DenseMatrix,
    w0: &DenseMatrix,
    rule: &mut UpdateRule,
    steps: usize,
) -> Result<InnerCurve> {
    let w_star = nnls_factor(m, h)?;
    let e_min = frob_error_direct(m, &w_star, h)?;
    let a = m.right_product(h)?;
    let b = gram(h);

    let mut errors = vec![frob_error_direct(m, w0, h)?];
    let mut w = w0.clone();
    for _ in 0..steps {
        w = rule.apply(Side::W, &w, &a, &b)?;
        errors.push(frob_error_direct(m, &w, h)?);
    }

    let gap0 = errors[0] - e_min;
    if gap0 <= 1e-12 * errors[0].max(f64::MIN_POSITIVE) {
        return Ok(InnerCurve {
            values: vec![0.0; steps + 1],
            e_min,
            errors,
            degenerate: true,
        });
    }
    let values = errors
        .iter()
        .enumerate()
        .map(|(l, &e)| if l == 0 { 1.0 } else { ((e - e_min) / gap0).max(0.0) })
        .collect();
    Ok(InnerCurve {
        values,
        e_min,
        errors,
        degenerate: false,
    })
}
