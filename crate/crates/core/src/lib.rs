//! Accelerated multiplicative, HALS and projected-gradient updates for
//! nonnegative matrix factorization `M ≈ W H`.
//!
//! Each outer iteration forms the products with `M` once per factor and then
//! repeats the cheap factor update while the inner budget and the
//! relative-improvement test allow. The budget comes from [`accel::CostModel`]
//! or from a timing calibration.
//!
//! ```
//! use nmf_accel::accel::{run_nmf, AccelConfig};
//! use nmf_accel::harness::{init_factors, synth_matrix, SynthKind};
//! use nmf_accel::updates::Algorithm;
//!
//! let m = synth_matrix(SynthKind::PlantedLowRank, 30, 20, 3, 1.0, 0.0, 1).unwrap();
//! let init = init_factors(30, 20, 3, 0, &m).unwrap();
//! let cfg = AccelConfig::accelerated(Algorithm::Hals).with_max_outer(Some(20));
//! let trace = run_nmf(&m, &init, &cfg).unwrap();
//! assert!(trace.final_error() < trace.initial_error());
//! ```

pub mod accel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod nnls;
pub mod updates;

pub use accel::{run_nmf, AccelConfig, CostModel, FactorPair, RunTrace};
pub use error::{NmfError, Result};
pub use linalg::{DataMatrix, DenseMatrix, Matrix, SparseMatrix};
pub use updates::Algorithm;
