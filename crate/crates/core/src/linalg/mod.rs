//! Matrix storage and the kernels shared by every update rule.
//!
//! All updates of `W` consume `A = M Hᵀ` and `B = H Hᵀ`; all updates of `H`
//! consume `C = Wᵀ M` and `Wᵀ W`. The data matrix `M` is only ever touched by
//! [`DataMatrix::right_product`] and [`DataMatrix::left_product`], which is
//! what [`CountingMatrix`] instruments.

mod dense;
mod sparse;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use dense::DenseMatrix;
pub use sparse::SparseMatrix;

use crate::error::{dim_err, NmfError, Result};

/// A nonnegative data matrix in either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<SparseMatrix> for Matrix {
    fn from(m: SparseMatrix) -> Self {
        Matrix::Sparse(m)
    }
}

impl Matrix {
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.clone(),
            Matrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    /// Fails if any stored entry is negative.
    pub fn check_nonnegative(&self) -> Result<()> {
        match self {
            Matrix::Dense(d) => match d.first_negative() {
                Some((i, j, v)) => Err(NmfError::InvalidMatrix(format!(
                    "negative entry {v} at ({i}, {j})"
                ))),
                None => Ok(()),
            },
            // CSR construction already rejects negative values.
            Matrix::Sparse(_) => Ok(()),
        }
    }
}

/// The operations a factorization run needs from its data matrix.
pub trait DataMatrix {
    fn shape(&self) -> (usize, usize);

    /// Number of stored nonzeros (`rows * cols` for dense storage).
    fn nnz(&self) -> usize;

    fn frob_norm_sq(&self) -> f64;

    /// `M Hᵀ` for `H` of shape `r x cols`; returns `rows x r`.
    fn right_product(&self, h: &DenseMatrix) -> Result<DenseMatrix>;

    /// `Wᵀ M` for `W` of shape `rows x r`; returns `r x cols`.
    fn left_product(&self, w: &DenseMatrix) -> Result<DenseMatrix>;
}

impl DataMatrix for Matrix {
    fn shape(&self) -> (usize, usize) {
        match self {
            Matrix::Dense(d) => d.shape(),
            Matrix::Sparse(s) => (s.rows(), s.cols()),
        }
    }

    fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows() * d.cols(),
            Matrix::Sparse(s) => s.nnz(),
        }
    }

    fn frob_norm_sq(&self) -> f64 {
        match self {
            Matrix::Dense(d) => d.frob_norm_sq(),
            Matrix::Sparse(s) => s.values().iter().map(|v| v * v).sum(),
        }
    }

    fn right_product(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        let (rows, cols) = self.shape();
        if h.cols() != cols {
            return Err(dim_err("right_product", (h.rows(), cols), h.shape()));
        }
        let r = h.rows();
        let mut out = DenseMatrix::zeros(rows, r);
        match self {
            Matrix::Dense(m) => {
                for i in 0..rows {
                    let m_row = m.row(i);
                    let out_row = out.row_mut(i);
                    for (p, o) in out_row.iter_mut().enumerate() {
                        *o = dot(m_row, h.row(p));
                    }
                }
            }
            Matrix::Sparse(m) => {
                // Hᵀ keeps the r values for one column of M contiguous.
                let ht = h.transpose();
                for i in 0..rows {
                    let (idx, vals) = m.row(i);
                    let out_row = out.row_mut(i);
                    for (&j, &v) in idx.iter().zip(vals) {
                        for (o, &hv) in out_row.iter_mut().zip(ht.row(j)) {
                            *o += v * hv;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn left_product(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        let (rows, cols) = self.shape();
        if w.rows() != rows {
            return Err(dim_err("left_product", (rows, w.cols()), w.shape()));
        }
        let r = w.cols();
        match self {
            Matrix::Dense(m) => {
                let mut out = DenseMatrix::zeros(r, cols);
                for i in 0..rows {
                    let m_row = m.row(i);
                    for (p, &wv) in w.row(i).iter().enumerate() {
                        if wv == 0.0 {
                            continue;
                        }
                        for (o, &mv) in out.row_mut(p).iter_mut().zip(m_row) {
                            *o += wv * mv;
                        }
                    }
                }
                Ok(out)
            }
            Matrix::Sparse(m) => {
                // Accumulate (Wᵀ M)ᵀ = Mᵀ W row by row, then transpose.
                let mut out_t = DenseMatrix::zeros(cols, r);
                for i in 0..rows {
                    let (idx, vals) = m.row(i);
                    let w_row = w.row(i);
                    for (&j, &v) in idx.iter().zip(vals) {
                        for (o, &wv) in out_t.row_mut(j).iter_mut().zip(w_row) {
                            *o += v * wv;
                        }
                    }
                }
                Ok(out_t.transpose())
            }
        }
    }
}

/// Wraps a data matrix and counts how often `M` is multiplied.
#[derive(Debug)]
pub struct CountingMatrix<'a, M: DataMatrix + ?Sized> {
    inner: &'a M,
    right: AtomicUsize,
    left: AtomicUsize,
}

impl<'a, M: DataMatrix + ?Sized> CountingMatrix<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self {
            inner,
            right: AtomicUsize::new(0),
            left: AtomicUsize::new(0),
        }
    }

    /// Number of `M Hᵀ` evaluations so far.
    pub fn right_products(&self) -> usize {
        self.right.load(Ordering::Relaxed)
    }

    /// Number of `Wᵀ M` evaluations so far.
    pub fn left_products(&self) -> usize {
        self.left.load(Ordering::Relaxed)
    }

    pub fn total_products(&self) -> usize {
        self.right_products() + self.left_products()
    }
}

impl<M: DataMatrix + ?Sized> DataMatrix for CountingMatrix<'_, M> {
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn frob_norm_sq(&self) -> f64 {
        self.inner.frob_norm_sq()
    }

    fn right_product(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        self.right.fetch_add(1, Ordering::Relaxed);
        self.inner.right_product(h)
    }

    fn left_product(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        self.left.fetch_add(1, Ordering::Relaxed);
        self.inner.left_product(w)
    }
}

#[inline]
/// Inner product with four independent accumulators, so the loop is not
/// bound by the latency of a single running sum.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Gram matrix of the rows of `h`: `H Hᵀ` (`r x r`).
///
/// Only the upper triangle is computed; the lower one is a mirror, so the
/// result is exactly symmetric.
pub fn gram(h: &DenseMatrix) -> DenseMatrix {
    let r = h.rows();
    let mut out = DenseMatrix::zeros(r, r);
    for p in 0..r {
        for q in p..r {
            let v = dot(h.row(p), h.row(q));
            out[(p, q)] = v;
            out[(q, p)] = v;
        }
    }
    out
}

/// Gram matrix of the columns of `w`: `Wᵀ W` (`r x r`), exactly symmetric.
pub fn gram_cols(w: &DenseMatrix) -> DenseMatrix {
    let r = w.cols();
    let mut out = DenseMatrix::zeros(r, r);
    for i in 0..w.rows() {
        let row = w.row(i);
        for p in 0..r {
            let wp = row[p];
            if wp == 0.0 {
                continue;
            }
            for q in p..r {
                out[(p, q)] += wp * row[q];
            }
        }
    }
    for p in 0..r {
        for q in (p + 1)..r {
            out[(q, p)] = out[(p, q)];
        }
    }
    out
}

/// `M Hᵀ` as a free function.
pub fn right_product<M: DataMatrix + ?Sized>(m: &M, h: &DenseMatrix) -> Result<DenseMatrix> {
    m.right_product(h)
}

/// Precomputed quantities [`frob_error`] may reuse instead of recomputing.
#[derive(Debug, Default, Clone, Copy)]
pub struct ErrorTerms<'a> {
    /// `M Hᵀ` for the current `H`.
    pub a: Option<&'a DenseMatrix>,
    /// `H Hᵀ` for the current `H`.
    pub b: Option<&'a DenseMatrix>,
    /// `||M||_F²`.
    pub msq: Option<f64>,
}

/// `sqrt(max(0, ||M||² − 2 cross + <G_w, G_h>))`, the residual norm from its
/// expanded pieces.
pub fn residual_norm(msq: f64, cross: f64, gram_w: &DenseMatrix, gram_h: &DenseMatrix) -> f64 {
    let quad: f64 = gram_w
        .as_slice()
        .iter()
        .zip(gram_h.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    (msq - 2.0 * cross + quad).max(0.0).sqrt()
}

/// `||M − WH||_F` through `||M||² − 2<A, W> + <WᵀW, B>`, without forming `WH`.
pub fn frob_error<M: DataMatrix + ?Sized>(
    m: &M,
    w: &DenseMatrix,
    h: &DenseMatrix,
    terms: ErrorTerms<'_>,
) -> Result<f64> {
    let (rows, cols) = m.shape();
    if w.rows() != rows || h.cols() != cols || w.cols() != h.rows() {
        return Err(dim_err("frob_error", (rows, cols), (w.rows(), h.cols())));
    }
    let r = w.cols();
    let a_owned;
    let a = match terms.a {
        Some(a) => {
            if a.shape() != (rows, r) {
                return Err(dim_err("frob_error (A)", (rows, r), a.shape()));
            }
            a
        }
        None => {
            a_owned = m.right_product(h)?;
            &a_owned
        }
    };
    let b_owned;
    let b = match terms.b {
        Some(b) => {
            if b.shape() != (r, r) {
                return Err(dim_err("frob_error (B)", (r, r), b.shape()));
            }
            b
        }
        None => {
            b_owned = gram(h);
            &b_owned
        }
    };
    let msq = terms.msq.unwrap_or_else(|| m.frob_norm_sq());
    let cross = a.dot(w)?;
    Ok(residual_norm(msq, cross, &gram_cols(w), b))
}

/// `||M − WH||_F` by explicit entrywise evaluation. Reference path for tests and
/// the NNLS oracle; costs `rows * cols * r`.
pub fn frob_error_direct(m: &Matrix, w: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    let (rows, cols) = m.shape();
    if w.rows() != rows || h.cols() != cols || w.cols() != h.rows() {
        return Err(dim_err("frob_error_direct", (rows, cols), (w.rows(), h.cols())));
    }
    let wh = w.matmul(h)?;
    let total = match m {
        Matrix::Dense(d) => d
            .as_slice()
            .iter()
            .zip(wh.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>(),
        Matrix::Sparse(s) => {
            let mut total = 0.0;
            for i in 0..rows {
                let (idx, vals) = s.row(i);
                let mut k = 0;
                for (j, &y) in wh.row(i).iter().enumerate() {
                    let x = if k < idx.len() && idx[k] == j {
                        k += 1;
                        vals[k - 1]
                    } else {
                        0.0
                    };
                    total += (x - y) * (x - y);
                }
            }
            total
        }
    };
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(rows: &[&[f64]]) -> Matrix {
        Matrix::Sparse(SparseMatrix::from_dense(&DenseMatrix::from_rows(rows)).unwrap())
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram(&DenseMatrix::identity(2)), DenseMatrix::identity(2));
        assert_eq!(gram(&DenseMatrix::from_rows(&[[1.0, 2.0]])), DenseMatrix::from_rows(&[[5.0]]));
        assert_eq!(
            gram(&DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]])),
            DenseMatrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]])
        );
    }

    #[test]
    fn right_product_examples() {
        let eye = sparse(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let h = DenseMatrix::from_rows(&[[3.0, 4.0]]);
        assert_eq!(eye.right_product(&h).unwrap(), DenseMatrix::from_rows(&[[3.0], [4.0]]));

        let m = Matrix::Dense(DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]));
        let h = DenseMatrix::from_rows(&[[1.0, 1.0]]);
        assert_eq!(m.right_product(&h).unwrap(), DenseMatrix::from_rows(&[[1.0], [2.0]]));

        let z = Matrix::Sparse(SparseMatrix::zeros(3, 3));
        let h = DenseMatrix::filled(2, 3, 0.7);
        assert_eq!(z.right_product(&h).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn right_product_shape_mismatch() {
        let m = Matrix::Dense(DenseMatrix::zeros(2, 3));
        let err = m.right_product(&DenseMatrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, NmfError::Dimension { .. }));
        assert!(m.left_product(&DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn left_product_matches_transpose_identity() {
        let d = DenseMatrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]]);
        let w = DenseMatrix::from_rows(&[[1.0, 2.0], [0.5, 1.0]]);
        let expected = w.transpose().matmul(&d).unwrap();
        assert_eq!(Matrix::Dense(d.clone()).left_product(&w).unwrap(), expected);
        let s = Matrix::Sparse(SparseMatrix::from_dense(&d).unwrap());
        assert_eq!(s.left_product(&w).unwrap(), expected);
    }

    #[test]
    fn frob_error_zero_factor_is_norm_of_m() {
        let m = Matrix::Dense(DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]));
        let w = DenseMatrix::zeros(2, 1);
        let h = DenseMatrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(frob_error(&m, &w, &h, ErrorTerms::default()).unwrap(), 5.0);
    }

    #[test]
    fn frob_error_exact_factorization_is_zero() {
        let w = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 3.0], [4.0, 1.0]]);
        let h = DenseMatrix::from_rows(&[[2.0, 0.0, 1.0, 5.0], [1.0, 1.0, 0.0, 2.0]]);
        let m = Matrix::Dense(w.matmul(&h).unwrap());
        let e = frob_error(&m, &w, &h, ErrorTerms::default()).unwrap();
        let norm = m.frob_norm_sq().sqrt();
        assert!(e <= 1e-10 * norm, "e = {e}");
    }

    #[test]
    fn frob_error_rejects_bad_terms() {
        let m = Matrix::Dense(DenseMatrix::zeros(2, 2));
        let w = DenseMatrix::zeros(2, 1);
        let h = DenseMatrix::zeros(1, 2);
        let bad = DenseMatrix::zeros(3, 1);
        let terms = ErrorTerms { a: Some(&bad), ..Default::default() };
        assert!(frob_error(&m, &w, &h, terms).is_err());
        assert!(frob_error(&m, &DenseMatrix::zeros(3, 1), &h, ErrorTerms::default()).is_err());
    }

    #[test]
    fn counting_matrix_counts_products() {
        let m = Matrix::Dense(DenseMatrix::filled(3, 2, 1.0));
        let c = CountingMatrix::new(&m);
        c.right_product(&DenseMatrix::zeros(1, 2)).unwrap();
        c.left_product(&DenseMatrix::zeros(3, 1)).unwrap();
        c.left_product(&DenseMatrix::zeros(3, 1)).unwrap();
        assert_eq!((c.right_products(), c.left_products()), (1, 2));
        assert_eq!(c.nnz(), 6);
    }
}
