mod common;

use std::time::Duration;

use common::*;
use nmf_accel::accel::{inner_budget, run_nmf, run_nmf_with_rho, AccelConfig, CostModel, RhoEstimate, RhoSource};
use nmf_accel::harness::init_factors;
use nmf_accel::linalg::{gram, gram_cols, CountingMatrix, DataMatrix, DenseMatrix, Matrix};
use nmf_accel::updates::{hals_update, hals_update_h, mu_update, mu_update_h, pg_update, pg_update_h, Algorithm, PgParams, Safeguards};
use nmf_accel::NmfError;

fn data(seed: u64, sparse: bool) -> Matrix {
    let mut g = rng(seed);
    if sparse {
        Matrix::Sparse(rand_sparse(&mut g, 40, 30, 0.2))
    } else {
        Matrix::Dense(rand_dense(&mut g, 40, 30))
    }
}

/// Unaccelerated reference: one update per factor, written against the update functions directly.
fn reference_run(m: &Matrix, w0: &DenseMatrix, h0: &DenseMatrix, algo: Algorithm, iters: usize) -> (Vec<f64>, DenseMatrix, DenseMatrix) {
    let sg = Safeguards::default();
    let pp = PgParams::default();
    let (mut w, mut h) = (w0.clone(), h0.clone());
    let mut errors = vec![residual_na(m, &w, &h)];
    for _ in 0..iters {
        let a = m.right_product(&h).unwrap();
        let b = gram(&h);
        w = match algo {
            Algorithm::Mu => mu_update(&w, &a, &b, &sg).unwrap(),
            Algorithm::Hals => hals_update(&w, &a, &b, &sg).unwrap(),
            Algorithm::Pg => pg_update(&w, &a, &b, &pp).unwrap().factor,
        };
        let c = m.left_product(&w).unwrap();
        let wtw = gram_cols(&w);
        h = match algo {
            Algorithm::Mu => mu_update_h(&h, &c, &wtw, &sg).unwrap(),
            Algorithm::Hals => hals_update_h(&h, &c, &wtw, &sg).unwrap(),
            Algorithm::Pg => pg_update_h(&h, &c, &wtw, &pp).unwrap().factor,
        };
        errors.push(residual_na(m, &w, &h));
    }
    (errors, w, h)
}

#[test]
fn alpha_zero_reproduces_plain_iterates() {
    for algo in [Algorithm::Mu, Algorithm::Hals, Algorithm::Pg] {
        for sparse in [false, true] {
            let m = data(11, sparse);
            let init = init_factors(40, 30, 4, 2, &m).unwrap();
            let cfg = AccelConfig::plain(algo).with_max_outer(Some(25));
            let trace = run_nmf(&m, &init, &cfg).unwrap();
            let (errs, w, h) = reference_run(&m, &init.w, &init.h, algo, 25);
            assert!(max_rel_diff(&trace.factors.w, &w) <= 1e-12, "{algo:?}");
            assert!(max_rel_diff(&trace.factors.h, &h) <= 1e-12, "{algo:?}");
            for (s, e) in trace.samples.iter().zip(&errs) {
                assert!((s.error - e).abs() <= 1e-9 * e, "{algo:?} iter {}: {} vs {e}", s.outer_iter, s.error);
            }
        }
    }
}

#[test]
fn inner_counts_respect_budget_and_epsilon_one() {
    let m = data(3, false);
    let init = init_factors(40, 30, 5, 0, &m).unwrap();
    let cm = CostModel::for_matrix(&m, 5).unwrap();
    for algo in [Algorithm::Mu, Algorithm::Hals, Algorithm::Pg] {
        for alpha in [0.0, 0.3, 1.0, 4.0] {
            let cfg = AccelConfig::new(algo, alpha, 0.01).with_max_outer(Some(10));
            let t = run_nmf(&m, &init, &cfg).unwrap();
            assert_eq!(t.budget_w, inner_budget(alpha, cm.rho_w));
            for s in &t.samples[1..] {
                assert!(s.w_inner >= 1 && s.w_inner <= t.budget_w);
                assert!(s.h_inner >= 1 && s.h_inner <= t.budget_h);
            }
        }
        let cfg = AccelConfig::new(algo, 10.0, 1.0).with_max_outer(Some(10));
        let t = run_nmf(&m, &init, &cfg).unwrap();
        assert!(t.budget_w > 1);
        assert!(t.samples[1..].iter().all(|s| s.w_inner == 1 && s.h_inner == 1));
    }
}

#[test]
fn two_products_per_outer_iteration() {
    for sparse in [false, true] {
        let m = data(8, sparse);
        let init = init_factors(40, 30, 3, 1, &m).unwrap();
        for algo in [Algorithm::Mu, Algorithm::Hals, Algorithm::Pg] {
            let counted = CountingMatrix::new(&m);
            let cfg = AccelConfig::accelerated(algo).with_max_outer(Some(9));
            let t = run_nmf(&counted, &init, &cfg).unwrap();
            assert_eq!(t.outer_iterations(), 9);
            assert_eq!(counted.right_products(), 9);
            assert_eq!(counted.left_products(), 9);
        }
    }
}

#[test]
fn errors_are_monotone_for_all_rules() {
    let m = data(21, true);
    let init = init_factors(40, 30, 4, 5, &m).unwrap();
    for algo in [Algorithm::Mu, Algorithm::Hals, Algorithm::Pg] {
        let t = run_nmf(&m, &init, &AccelConfig::accelerated(algo).with_max_outer(Some(40))).unwrap();
        for pair in t.samples.windows(2) {
            assert!(pair[1].error <= pair[0].error * (1.0 + 1e-10), "{algo:?}");
        }
        let direct = residual_na(&m, &t.factors.w, &t.factors.h);
        assert!((t.final_error() - direct).abs() <= 1e-6 * direct);
    }
}

#[test]
fn time_budget_stops_the_run() {
    let m = data(2, false);
    let init = init_factors(40, 30, 4, 0, &m).unwrap();
    let cfg = AccelConfig::plain(Algorithm::Hals)
        .with_max_outer(None)
        .with_time_budget(Some(Duration::from_millis(30)));
    let t = run_nmf(&m, &init, &cfg).unwrap();
    assert!(t.outer_iterations() > 0);
    let last = t.samples.last().unwrap().elapsed_s;
    assert!(last >= 0.03 && last < 1.0);
}

#[test]
fn explicit_rho_is_recorded() {
    let m = data(2, false);
    let init = init_factors(40, 30, 2, 0, &m).unwrap();
    let rho = RhoEstimate { rho_w: 3.2, rho_h: 1.0, source: RhoSource::Measured };
    let t = run_nmf_with_rho(&m, &init, &AccelConfig::new(Algorithm::Mu, 1.0, 0.0).with_max_outer(Some(2)), rho).unwrap();
    assert_eq!((t.budget_w, t.budget_h), (4, 2));
    assert_eq!(t.rho.source, RhoSource::Measured);
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = data(2, false);
    let init = init_factors(40, 30, 2, 0, &m).unwrap();
    let unbounded = AccelConfig::plain(Algorithm::Mu).with_max_outer(None);
    assert!(matches!(run_nmf(&m, &init, &unbounded), Err(NmfError::InvalidConfig(_))));
    let negative_alpha = AccelConfig::new(Algorithm::Mu, -1.0, 0.0);
    assert!(run_nmf(&m, &init, &negative_alpha).is_err());
    let mut bad = init.clone();
    bad.w[(0, 0)] = -1.0;
    assert!(matches!(
        run_nmf(&m, &bad, &AccelConfig::plain(Algorithm::Hals)),
        Err(NmfError::Precondition(_))
    ));
    let wrong_shape = init_factors(30, 40, 2, 0, &Matrix::Dense(DenseMatrix::filled(30, 40, 1.0))).unwrap();
    assert!(run_nmf(&m, &wrong_shape, &AccelConfig::plain(Algorithm::Hals)).is_err());
}

#[test]
fn cost_model_errors_and_flags() {
    assert!(CostModel::new(0, 5, 1, 0).is_err());
    assert!(CostModel::new(3, 3, 1, 10).is_err());
    let cm = CostModel::new(4, 4, 5, 16).unwrap();
    assert!(cm.rank_exceeds_dims());
    assert!(!cm.compresses());
}
