//! Inner update rules.
//!
//! Each rule improves one factor while the other is held fixed, using only the
//! precomputed products: for `W` these are `A = M Hᵀ` (`m x r`) and
//! `B = H Hᵀ`; for `H` they are `C = Wᵀ M` (`r x n`) and `Wᵀ W`. None of them
//! touch `M`.
//!
//! The `*_h` variants update `H` in its natural `r x n` layout. They perform
//! exactly the arithmetic of the `W` rule applied to the transposed problem
//! (`Hᵀ` as the factor, `Cᵀ` as `A`), so results agree with
//! transpose-update-transpose.

use crate::error::{dim_err, NmfError, Result};
use crate::linalg::DenseMatrix;

/// Numerical safeguards for MU and HALS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Safeguards {
    /// Lower bound applied to MU iterates. Zero disables the floor.
    pub delta: f64,
    /// Value a HALS column (or row of `H`) is reset to when it becomes all zero.
    pub reinit_value: f64,
    /// MU denominators and HALS diagonals at or below this are treated as degenerate.
    pub denom_floor: f64,
}

impl Default for Safeguards {
    fn default() -> Self {
        Self {
            delta: 1e-16,
            reinit_value: 1e-16,
            denom_floor: 1e-16,
        }
    }
}

impl Safeguards {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(NmfError::InvalidConfig(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.reinit_value > 0.0) {
            return Err(NmfError::InvalidConfig(format!(
                "reinit_value must be > 0, got {}",
                self.reinit_value
            )));
        }
        if !(self.denom_floor > 0.0) {
            return Err(NmfError::InvalidConfig(format!(
                "denom_floor must be > 0, got {}",
                self.denom_floor
            )));
        }
        Ok(())
    }
}

/// Line-search constants for the projected-gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    /// Sufficient-decrease constant.
    pub sigma: f64,
    /// Step shrink factor; its inverse is the growth factor.
    pub beta: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for PgParams {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            beta: 0.1,
            initial_step: 1.0,
            max_backtracks: 20,
        }
    }
}

impl PgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(NmfError::InvalidConfig(format!("sigma must lie in (0,1), got {}", self.sigma)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(NmfError::InvalidConfig(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if !(self.initial_step > 0.0) {
            return Err(NmfError::InvalidConfig(format!(
                "initial_step must be > 0, got {}",
                self.initial_step
            )));
        }
        Ok(())
    }
}

/// Result of one projected-gradient step.
#[derive(Debug, Clone)]
pub struct PgStep {
    pub factor: DenseMatrix,
    /// Accepted step length, to warm-start the next call.
    pub step: f64,
    /// True when no step satisfied the sufficient-decrease test; `factor` is then the input.
    pub stalled: bool,
}

/// Which factor an update acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    W,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mu,
    Hals,
    Pg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mu => "mu",
            Algorithm::Hals => "hals",
            Algorithm::Pg => "pg",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mu" => Ok(Algorithm::Mu),
            "hals" => Ok(Algorithm::Hals),
            "pg" => Ok(Algorithm::Pg),
            other => Err(NmfError::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_shapes(side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    let r = match side {
        Side::W => f.cols(),
        Side::H => f.rows(),
    };
    if a.shape() != f.shape() {
        return Err(dim_err("update (A)", f.shape(), a.shape()));
    }
    if b.shape() != (r, r) {
        return Err(dim_err("update (B)", (r, r), b.shape()));
    }
    Ok(())
}

/// `F B` for the `W` layout, `B F` for the `H` layout (the transpose of `Fᵀ B`).
fn factor_times_gram(side: Side, f: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    match side {
        Side::W => f.matmul(b),
        Side::H => b.matmul(f),
    }
    .expect("shapes checked by caller")
}

fn mu_impl(side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    check_shapes(side, f, a, b)?;
    if let Some((i, j, v)) = f.first_negative() {
        return Err(NmfError::Precondition(format!(
            "multiplicative update needs a nonnegative factor; entry ({i}, {j}) is {v}"
        )));
    }
    let fb = factor_times_gram(side, f, b);
    let mut out = f.clone();
    for ((o, &av), &den) in out.as_mut_slice().iter_mut().zip(a.as_slice()).zip(fb.as_slice()) {
        let den = den.max(sg.denom_floor);
        *o = (*o * (av / den)).max(sg.delta);
    }
    Ok(out)
}

/// Multiplicative update of `W`: `max(delta, W ∘ A ⊘ max(W B, denom_floor))`.
pub fn mu_update(w: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    mu_impl(Side::W, w, a, b, sg)
}

/// Multiplicative update of `H` (`r x n`) from `C = Wᵀ M` and `Wᵀ W`.
pub fn mu_update_h(h: &DenseMatrix, c: &DenseMatrix, wtw: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    mu_impl(Side::H, h, c, wtw, sg)
}

fn check_gram_symmetric(b: &DenseMatrix) -> Result<()> {
    let scale = b.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !b.is_symmetric(1e-12 * scale) {
        return Err(NmfError::Precondition("HALS needs a symmetric Gram matrix".into()));
    }
    Ok(())
}

/// Updates block `p` of the factor in place: column `p` of `W`, or row `p` of `H`.
///
/// Blocks before `p` are expected to hold their new values already.
fn hals_block(side: Side, f: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, p: usize, sg: &Safeguards) {
    let bpp = b[(p, p)];
    if bpp <= sg.denom_floor {
        return;
    }
    let r = b.rows();
    let mut all_zero = true;
    match side {
        Side::W => {
            // Row p of B equals column p; reading the row keeps the arithmetic identical to the H side.
            let brow = b.row(p);
            let cols = f.cols();
            let (av, fv) = (a.as_slice(), f.as_mut_slice());
            for (row, a_row) in fv.chunks_exact_mut(cols).zip(av.chunks_exact(cols)) {
                let mut num = a_row[p];
                for (&x, &c) in row[..p].iter().zip(&brow[..p]) {
                    num -= x * c;
                }
                for (&x, &c) in row[p + 1..].iter().zip(&brow[p + 1..]) {
                    num -= x * c;
                }
                let v = (num / bpp).max(0.0);
                all_zero &= v == 0.0;
                row[p] = v;
            }
            if all_zero {
                for row in fv.chunks_exact_mut(cols) {
                    row[p] = sg.reinit_value;
                }
            }
        }
        Side::H => {
            let n = f.cols();
            let mut num = a.row(p).to_vec();
            for l in (0..r).filter(|&l| l != p) {
                let coef = b[(p, l)];
                for (acc, &hv) in num.iter_mut().zip(f.row(l)) {
                    *acc -= hv * coef;
                }
            }
            let row = f.row_mut(p);
            for j in 0..n {
                let v = (num[j] / bpp).max(0.0);
                all_zero &= v == 0.0;
                row[j] = v;
            }
            if all_zero {
                row.fill(sg.reinit_value);
            }
        }
    }
}

/// Exact minimization of the objective over column `p` of `w`, in place.
///
/// Columns `< p` are read with their current (already updated) values. A
/// column that comes out all zero is reset to `sg.reinit_value`; when
/// `B[p][p] <= sg.denom_floor` the column is left unchanged.
pub fn hals_update_column(
    w: &mut DenseMatrix,
    a: &DenseMatrix,
    b: &DenseMatrix,
    p: usize,
    sg: &Safeguards,
) -> Result<()> {
    check_shapes(Side::W, w, a, b)?;
    if p >= w.cols() {
        return Err(NmfError::Precondition(format!("column {p} out of range")));
    }
    hals_block(Side::W, w, a, b, p, sg);
    Ok(())
}

fn hals_impl(side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    check_shapes(side, f, a, b)?;
    check_gram_symmetric(b)?;
    let mut out = f.clone();
    for p in 0..b.rows() {
        hals_block(side, &mut out, a, b, p, sg);
    }
    Ok(out)
}

/// One HALS sweep over the columns of `W`, in ascending order.
pub fn hals_update(w: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    hals_impl(Side::W, w, a, b, sg)
}

/// One HALS sweep over the rows of `H`.
pub fn hals_update_h(h: &DenseMatrix, c: &DenseMatrix, wtw: &DenseMatrix, sg: &Safeguards) -> Result<DenseMatrix> {
    hals_impl(Side::H, h, c, wtw, sg)
}

/// Gradient of `||M − WH||²` with respect to the factor: `2 W B − 2 A`
/// (or `2 B H − 2 C` for `H`).
pub fn gradient(side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_shapes(side, f, a, b)?;
    let mut g = factor_times_gram(side, f, b);
    for (gv, &av) in g.as_mut_slice().iter_mut().zip(a.as_slice()) {
        *gv = 2.0 * *gv - 2.0 * av;
    }
    Ok(g)
}

fn project_step(f: &DenseMatrix, g: &DenseMatrix, step: f64) -> DenseMatrix {
    let mut out = f.clone();
    for (o, &gv) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *o = (*o - step * gv).max(0.0);
    }
    out
}

/// Sufficient decrease `f(F') − f(F) <= sigma <G, D>` with `D = F' − F`.
///
/// The objective is quadratic, so `f(F') − f(F) = <G, D> + <D, D B>` exactly
/// and the test needs only `G` and `B`.
fn sufficient_decrease(side: Side, f: &DenseMatrix, cand: &DenseMatrix, g: &DenseMatrix, b: &DenseMatrix, sigma: f64) -> bool {
    let mut d = cand.clone();
    for (dv, &fv) in d.as_mut_slice().iter_mut().zip(f.as_slice()) {
        *dv -= fv;
    }
    let gd: f64 = g.as_slice().iter().zip(d.as_slice()).map(|(x, y)| x * y).sum();
    let db = factor_times_gram(side, &d, b);
    let dbd: f64 = d.as_slice().iter().zip(db.as_slice()).map(|(x, y)| x * y).sum();
    (1.0 - sigma) * gd + dbd <= 0.0
}

fn pg_impl(side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, pp: &PgParams) -> Result<PgStep> {
    let g = gradient(side, f, a, b)?;
    let mut step = pp.initial_step;
    let mut cand = project_step(f, &g, step);

    if sufficient_decrease(side, f, &cand, &g, b, pp.sigma) {
        // Grow the step while the test keeps holding and the projection still moves.
        for _ in 0..pp.max_backtracks {
            let bigger = step / pp.beta;
            let next = project_step(f, &g, bigger);
            if next == cand || !sufficient_decrease(side, f, &next, &g, b, pp.sigma) {
                break;
            }
            step = bigger;
            cand = next;
        }
        return Ok(PgStep {
            factor: cand,
            step,
            stalled: false,
        });
    }

    for _ in 0..pp.max_backtracks {
        step *= pp.beta;
        cand = project_step(f, &g, step);
        if sufficient_decrease(side, f, &cand, &g, b, pp.sigma) {
            return Ok(PgStep {
                factor: cand,
                step,
                stalled: false,
            });
        }
    }
    Ok(PgStep {
        factor: f.clone(),
        step: pp.initial_step * pp.beta.powi(pp.max_backtracks as i32),
        stalled: true,
    })
}

/// One projected-gradient step on `W` with an Armijo-type line search
/// warm-started at `pp.initial_step`.
pub fn pg_update(w: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix, pp: &PgParams) -> Result<PgStep> {
    pg_impl(Side::W, w, a, b, pp)
}

/// One projected-gradient step on `H`.
pub fn pg_update_h(h: &DenseMatrix, c: &DenseMatrix, wtw: &DenseMatrix, pp: &PgParams) -> Result<PgStep> {
    pg_impl(Side::H, h, c, wtw, pp)
}

/// An update rule together with its parameters and PG step memory.
#[derive(Debug, Clone)]
pub struct UpdateRule {
    pub algo: Algorithm,
    pub safeguards: Safeguards,
    pub pg: PgParams,
    step: f64,
    stalls: usize,
}

impl UpdateRule {
    pub fn new(algo: Algorithm, safeguards: Safeguards, pg: PgParams) -> Self {
        Self {
            algo,
            safeguards,
            pg,
            step: pg.initial_step,
            stalls: 0,
        }
    }

    /// Forget the warm-started PG step.
    pub fn reset_step(&mut self) {
        self.step = self.pg.initial_step;
    }

    /// Number of PG line searches that failed so far.
    pub fn stalls(&self) -> usize {
        self.stalls
    }

    pub fn apply(&mut self, side: Side, f: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
        match (self.algo, side) {
            (Algorithm::Mu, _) => mu_impl(side, f, a, b, &self.safeguards),
            (Algorithm::Hals, _) => hals_impl(side, f, a, b, &self.safeguards),
            (Algorithm::Pg, _) => {
                let params = PgParams {
                    initial_step: self.step,
                    ..self.pg
                };
                let out = pg_impl(side, f, a, b, &params)?;
                if out.stalled {
                    self.stalls += 1;
                    self.step = self.pg.initial_step;
                } else {
                    self.step = out.step;
                }
                Ok(out.factor)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows)
    }

    #[test]
    fn mu_scalar_example() {
        let out = mu_update(&m(&[&[2.0]]), &m(&[&[4.0]]), &m(&[&[1.0]]), &Safeguards::default()).unwrap();
        assert_eq!(out, m(&[&[4.0]]));
    }

    #[test]
    fn mu_fixed_point() {
        let w = m(&[&[0.3, 1.2], &[2.0, 0.7], &[0.1, 0.4]]);
        let b = m(&[&[2.0, 0.5], &[0.5, 1.5]]);
        let a = w.matmul(&b).unwrap();
        let out = mu_update(&w, &a, &b, &Safeguards::default()).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn mu_floor_engages() {
        let out = mu_update(&m(&[&[1.0]]), &m(&[&[0.0]]), &m(&[&[1.0]]), &Safeguards::default()).unwrap();
        assert_eq!(out, m(&[&[1e-16]]));
    }

    #[test]
    fn mu_rejects_negative_factor() {
        let err = mu_update(&m(&[&[-1.0]]), &m(&[&[1.0]]), &m(&[&[1.0]]), &Safeguards::default());
        assert!(matches!(err, Err(NmfError::Precondition(_))));
    }

    #[test]
    fn mu_zero_denominator_is_guarded() {
        // B has a zero diagonal: W B vanishes, so the floor keeps the division finite.
        let out = mu_update(&m(&[&[1.0]]), &m(&[&[1.0]]), &m(&[&[0.0]]), &Safeguards::default()).unwrap();
        assert!(out[(0, 0)].is_finite());
    }

    #[test]
    fn hals_rank_one_example() {
        let out = hals_update(&m(&[&[5.0], &[5.0]]), &m(&[&[3.0], &[-1.0]]), &m(&[&[2.0]]), &Safeguards::default())
            .unwrap();
        assert_eq!(out, m(&[&[1.5], &[0.0]]));
    }

    #[test]
    fn hals_identity_gram_is_projection() {
        let w = m(&[&[9.0, 1.0], &[3.0, 3.0]]);
        let a = m(&[&[0.5, -2.0], &[-1.0, 4.0]]);
        let out = hals_update(&w, &a, &DenseMatrix::identity(2), &Safeguards::default()).unwrap();
        assert_eq!(out, m(&[&[0.5, 0.0], &[0.0, 4.0]]));
    }

    #[test]
    fn hals_reinitializes_zero_column() {
        let out = hals_update(&m(&[&[1.0], &[2.0]]), &m(&[&[-1.0], &[-3.0]]), &m(&[&[1.0]]), &Safeguards::default())
            .unwrap();
        assert_eq!(out, m(&[&[1e-16], &[1e-16]]));
    }

    #[test]
    fn hals_skips_degenerate_diagonal() {
        let w = m(&[&[0.5, 2.0]]);
        let b = m(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let out = hals_update(&w, &m(&[&[1.0, 3.0]]), &b, &Safeguards::default()).unwrap();
        assert_eq!(out[(0, 0)], 0.5);
        assert_eq!(out[(0, 1)], 3.0);
    }

    #[test]
    fn hals_rejects_asymmetric_gram() {
        let b = m(&[&[1.0, 0.5], &[0.4, 1.0]]);
        let err = hals_update(&m(&[&[1.0, 1.0]]), &m(&[&[1.0, 1.0]]), &b, &Safeguards::default());
        assert!(matches!(err, Err(NmfError::Precondition(_))));
    }

    #[test]
    fn pg_stationary_point_is_kept() {
        let w = m(&[&[0.3, 1.2], &[2.0, 0.7]]);
        let b = m(&[&[2.0, 0.5], &[0.5, 1.5]]);
        let a = w.matmul(&b).unwrap();
        let out = pg_update(&w, &a, &b, &PgParams::default()).unwrap();
        assert_eq!(out.factor, w);
        assert!(!out.stalled);
    }

    #[test]
    fn pg_projection_clips_at_boundary() {
        let params = PgParams {
            initial_step: 0.5,
            max_backtracks: 0,
            ..PgParams::default()
        };
        let out = pg_update(&m(&[&[1.0]]), &m(&[&[0.0]]), &m(&[&[1.0]]), &params).unwrap();
        assert_eq!(out.factor, m(&[&[0.0]]));
        assert_eq!(out.step, 0.5);
        // q(w) = w² B − 2 w A drops from 1 to 0.
    }

    #[test]
    fn pg_stall_reports_flag() {
        // A tiny step budget on an ill-scaled problem never satisfies the test.
        let params = PgParams {
            initial_step: 1e3,
            beta: 0.5,
            max_backtracks: 2,
            ..PgParams::default()
        };
        let w = m(&[&[1.0]]);
        let out = pg_update(&w, &m(&[&[0.0]]), &m(&[&[1.0]]), &params).unwrap();
        // The projected point is 0 for every step tried, which is a descent step, so no stall here.
        assert!(!out.stalled);

        let w = m(&[&[5.0]]);
        let a = m(&[&[4.0]]);
        let out = pg_update(&w, &a, &m(&[&[1.0]]), &params).unwrap();
        assert!(out.stalled);
        assert_eq!(out.factor, w);
        assert_eq!(out.step, 1e3 * 0.25);
    }

    #[test]
    fn safeguard_and_param_validation() {
        assert!(Safeguards::default().validate().is_ok());
        assert!(Safeguards { delta: -1.0, ..Default::default() }.validate().is_err());
        assert!(Safeguards { reinit_value: 0.0, ..Default::default() }.validate().is_err());
        assert!(PgParams { sigma: 1.0, ..Default::default() }.validate().is_err());
        assert!(PgParams { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(PgParams { initial_step: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn algorithm_parses() {
        assert_eq!("HALS".parse::<Algorithm>().unwrap(), Algorithm::Hals);
        assert!("newton".parse::<Algorithm>().is_err());
    }
}
