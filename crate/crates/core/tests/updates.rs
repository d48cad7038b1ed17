mod common;

use common::*;
use nmf_accel::linalg::{frob_error_direct, gram, gram_cols, DataMatrix, DenseMatrix, Matrix};
use nmf_accel::updates::{
    gradient, hals_update, hals_update_column, hals_update_h, mu_update, mu_update_h, pg_update, pg_update_h,
    PgParams, Safeguards, Side,
};
use nmf_accel::NmfError;
use proptest::prelude::*;
use rand::Rng;

const MONOTONE_REL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-13;

struct Instance {
    m: Matrix,
    w: DenseMatrix,
    h: DenseMatrix,
}

fn instance(seed: u64) -> Instance {
    let mut g = rng(seed);
    let rows = g.random_range(1..=30);
    let cols = g.random_range(1..=30);
    let r = g.random_range(1..=5);
    let m = if g.random_bool(0.5) {
        Matrix::Dense(rand_dense(&mut g, rows, cols))
    } else {
        Matrix::Sparse(rand_sparse(&mut g, rows, cols, 0.1))
    };
    let w = rand_positive(&mut g, rows, r);
    let h = rand_positive(&mut g, r, cols);
    Instance { m, w, h }
}

fn w_step(kind: usize, inst: &Instance) -> DenseMatrix {
    let a = inst.m.right_product(&inst.h).unwrap();
    let b = gram(&inst.h);
    let sg = Safeguards::default();
    match kind {
        0 => mu_update(&inst.w, &a, &b, &sg).unwrap(),
        1 => hals_update(&inst.w, &a, &b, &sg).unwrap(),
        _ => pg_update(&inst.w, &a, &b, &PgParams::default()).unwrap().factor,
    }
}

fn h_step(kind: usize, inst: &Instance) -> DenseMatrix {
    let c = inst.m.left_product(&inst.w).unwrap();
    let wtw = gram_cols(&inst.w);
    let sg = Safeguards::default();
    match kind {
        0 => mu_update_h(&inst.h, &c, &wtw, &sg).unwrap(),
        1 => hals_update_h(&inst.h, &c, &wtw, &sg).unwrap(),
        _ => pg_update_h(&inst.h, &c, &wtw, &PgParams::default()).unwrap().factor,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn updates_never_increase_error(seed in any::<u64>(), kind in 0usize..3) {
        let inst = instance(seed);
        let before = frob_error_direct(&inst.m, &inst.w, &inst.h).unwrap();
        let w2 = w_step(kind, &inst);
        prop_assert!(w2.is_nonnegative());
        let after_w = frob_error_direct(&inst.m, &w2, &inst.h).unwrap();
        prop_assert!(after_w <= before * (1.0 + MONOTONE_REL_TOL) + 1e-300);
        let h2 = h_step(kind, &inst);
        prop_assert!(h2.is_nonnegative());
        let after_h = frob_error_direct(&inst.m, &inst.w, &h2).unwrap();
        prop_assert!(after_h <= before * (1.0 + MONOTONE_REL_TOL) + 1e-300);
    }

    #[test]
    fn h_kernels_equal_transposed_w_kernels(seed in any::<u64>(), kind in 0usize..3) {
        let inst = instance(seed);
        let c = inst.m.left_product(&inst.w).unwrap();
        let wtw = gram_cols(&inst.w);
        let sg = Safeguards::default();
        let pp = PgParams::default();
        let (direct, via_w) = match kind {
            0 => (
                mu_update_h(&inst.h, &c, &wtw, &sg).unwrap(),
                mu_update(&inst.h.transpose(), &c.transpose(), &wtw, &sg).unwrap().transpose(),
            ),
            1 => (
                hals_update_h(&inst.h, &c, &wtw, &sg).unwrap(),
                hals_update(&inst.h.transpose(), &c.transpose(), &wtw, &sg).unwrap().transpose(),
            ),
            _ => (
                pg_update_h(&inst.h, &c, &wtw, &pp).unwrap().factor,
                pg_update(&inst.h.transpose(), &c.transpose(), &wtw, &pp).unwrap().factor.transpose(),
            ),
        };
        prop_assert!(direct.max_abs_diff(&via_w).unwrap() <= SYMMETRY_TOL * direct.frob_norm().max(1.0));
    }

    #[test]
    fn mu_output_respects_floor(seed in any::<u64>()) {
        let mut g = rng(seed);
        let (m, r) = (g.random_range(1..10), g.random_range(1..4));
        let w = rand_dense(&mut g, m, r);
        // Zeros in A force the floor.
        let a = DenseMatrix::from_fn(m, r, |_, _| if g.random_bool(0.3) { 0.0 } else { g.random::<f64>() });
        let b = gram(&rand_dense(&mut g, r, 6));
        let out = mu_update(&w, &a, &b, &Safeguards::default()).unwrap();
        prop_assert!(out.min_value() >= 1e-16);
    }
}

#[test]
fn hals_columns_satisfy_kkt_right_after_update() {
    let sg = Safeguards::default();
    for seed in 0..100 {
        let mut g = rng(seed);
        let (m, n, r) = (g.random_range(2..25), g.random_range(2..25), g.random_range(1..6));
        let mat = Matrix::Dense(rand_dense(&mut g, m, n));
        let h = rand_dense(&mut g, r, n);
        let mut w = rand_dense(&mut g, m, r);
        let a = mat.right_product(&h).unwrap();
        let b = gram(&h);
        let tol = 1e-9 * a.frob_norm();
        for p in 0..r {
            hals_update_column(&mut w, &a, &b, p, &sg).unwrap();
            let wb = w.matmul(&b).unwrap();
            let reinit = (0..m).all(|i| w[(i, p)] == sg.reinit_value);
            if reinit {
                continue;
            }
            for i in 0..m {
                let resid = a[(i, p)] - wb[(i, p)];
                if w[(i, p)] > 0.0 {
                    assert!(resid.abs() <= tol, "seed {seed} ({i},{p}) interior residual {resid}");
                } else {
                    assert!(resid <= tol, "seed {seed} ({i},{p}) boundary residual {resid}");
                }
            }
        }
    }
}

#[test]
fn hals_rank_one_is_closed_form() {
    let mut g = rng(9);
    let a = DenseMatrix::from_fn(7, 1, |_, _| g.random::<f64>() * 2.0 - 0.5);
    let b = DenseMatrix::from_rows(&[[1.7]]);
    let out = hals_update(&rand_dense(&mut g, 7, 1), &a, &b, &Safeguards::default()).unwrap();
    for i in 0..7 {
        assert_eq!(out[(i, 0)], (a[(i, 0)] / 1.7).max(0.0));
    }
}

#[test]
fn hals_rejects_asymmetric_gram() {
    let b = DenseMatrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]);
    let w = DenseMatrix::filled(2, 2, 1.0);
    let err = hals_update(&w, &w, &b, &Safeguards::default());
    assert!(matches!(err, Err(NmfError::Precondition(_))));
}

fn objective(m: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix) -> f64 {
    let mut f = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let fit: f64 = (0..w.cols()).map(|p| w[(i, p)] * h[(p, j)]).sum();
            f += (m[(i, j)] - fit).powi(2);
        }
    }
    f
}

#[test]
fn gradient_matches_central_differences() {
    let step = 1e-6;
    for seed in 0..20 {
        let mut g = rng(seed);
        let m = rand_dense(&mut g, 4, 5);
        let h = rand_dense(&mut g, 3, 5);
        let w = rand_dense(&mut g, 4, 3);
        let a = m.matmul(&h.transpose()).unwrap();
        let grad = gradient(Side::W, &w, &a, &gram(&h)).unwrap();
        for i in 0..4 {
            for p in 0..3 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[(i, p)] += step;
                wm[(i, p)] -= step;
                let fd = (objective(&m, &wp, &h) - objective(&m, &wm, &h)) / (2.0 * step);
                let scale = grad[(i, p)].abs().max(1e-3);
                assert!((fd - grad[(i, p)]).abs() <= 1e-5 * scale, "seed {seed} ({i},{p}): {fd} vs {}", grad[(i, p)]);
            }
        }
    }
}

#[test]
fn pg_projection_stays_nonnegative_and_warm_step_is_returned() {
    let mut g = rng(5);
    let h = rand_dense(&mut g, 3, 8);
    let m = rand_dense(&mut g, 6, 8);
    let a = m.matmul(&h.transpose()).unwrap();
    let step = pg_update(&rand_dense(&mut g, 6, 3), &a, &gram(&h), &PgParams::default()).unwrap();
    assert!(step.factor.is_nonnegative());
    assert!(step.step > 0.0 && !step.stalled);
}
