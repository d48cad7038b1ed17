//! Synthetic data and seeded initialization.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accel::FactorPair;
use crate::error::{NmfError, Result};
use crate::linalg::{gram, gram_cols, DataMatrix, DenseMatrix, Matrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// i.i.d. U[0,1) entries.
    UniformDense,
    /// `W* H* + noise * U[0,1)` with nonnegative uniform planted factors.
    PlantedLowRank,
    /// Bernoulli(density) support with U[0,1) values, stored as CSR.
    SparseUniform,
}

impl FromStr for SynthKind {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-dense" => Ok(SynthKind::UniformDense),
            "planted-lowrank" => Ok(SynthKind::PlantedLowRank),
            "sparse-uniform" => Ok(SynthKind::SparseUniform),
            other => Err(NmfError::InvalidConfig(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::UniformDense => "uniform-dense",
            SynthKind::PlantedLowRank => "planted-lowrank",
            SynthKind::SparseUniform => "sparse-uniform",
        }
    }
}

/// Parameters of a synthetic data matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub m: usize,
    pub n: usize,
    pub r_true: usize,
    pub density: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Parses `kind,m,n,r,density,noise[,seed]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 && parts.len() != 7 {
            return Err(NmfError::InvalidConfig(format!(
                "synthetic spec '{s}' must be kind,m,n,r,density,noise[,seed]"
            )));
        }
        let num = |i: usize| -> Result<f64> {
            parts[i]
                .parse::<f64>()
                .map_err(|_| NmfError::InvalidConfig(format!("bad number '{}' in '{s}'", parts[i])))
        };
        let int = |i: usize| -> Result<usize> {
            parts[i]
                .parse::<usize>()
                .map_err(|_| NmfError::InvalidConfig(format!("bad integer '{}' in '{s}'", parts[i])))
        };
        Ok(Self {
            kind: parts[0].parse()?,
            m: int(1)?,
            n: int(2)?,
            r_true: int(3)?,
            density: num(4)?,
            noise: num(5)?,
            seed: if parts.len() == 7 { int(6)? as u64 } else { 0 },
        })
    }

    pub fn generate(&self) -> Result<Matrix> {
        synth_matrix(self.kind, self.m, self.n, self.r_true, self.density, self.noise, self.seed)
    }
}

impl std::fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            self.kind.name(),
            self.m,
            self.n,
            self.r_true,
            self.density,
            self.noise,
            self.seed
        )
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Deterministic synthetic matrix for a given seed.
pub fn synth_matrix(
    kind: SynthKind,
    m: usize,
    n: usize,
    r_true: usize,
    density: f64,
    noise: f64,
    seed: u64,
) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(NmfError::InvalidConfig(format!("matrix must be non-empty, got {m}x{n}")));
    }
    if !(noise >= 0.0) {
        return Err(NmfError::InvalidConfig(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::UniformDense => Ok(Matrix::Dense(uniform(&mut rng, m, n))),
        SynthKind::PlantedLowRank => {
            if r_true == 0 {
                return Err(NmfError::InvalidConfig("planted rank must be >= 1".into()));
            }
            let w = uniform(&mut rng, m, r_true);
            let h = uniform(&mut rng, r_true, n);
            let mut prod = w.matmul(&h)?;
            if noise > 0.0 {
                for v in prod.as_mut_slice() {
                    *v += noise * rng.random::<f64>();
                }
            }
            Ok(Matrix::Dense(prod))
        }
        SynthKind::SparseUniform => {
            if !(density > 0.0 && density <= 1.0) {
                return Err(NmfError::InvalidConfig(format!("density must lie in (0,1], got {density}")));
            }
            let mut triplets = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.random_bool(density) {
                        triplets.push((i, j, rng.random::<f64>()));
                    }
                }
            }
            Ok(Matrix::Sparse(SparseMatrix::from_triplets(m, n, triplets)?))
        }
    }
}

const MAX_INIT_ATTEMPTS: u64 = 10;

/// Seeded U[0,1) factors, rescaled so that `argmin_a ||M − a W H||_F = 1`.
///
/// The optimal multiplier of the raw product is `<M, WH> / ||WH||²`; both
/// factors are multiplied by its square root. When `<M, WH> = 0` the draw is
/// repeated with the next seed, up to ten attempts.
pub fn init_factors<M: DataMatrix + ?Sized>(m_rows: usize, n_cols: usize, r: usize, seed: u64, data: &M) -> Result<FactorPair> {
    if r == 0 {
        return Err(NmfError::InvalidConfig("rank must be >= 1".into()));
    }
    if data.shape() != (m_rows, n_cols) {
        return Err(NmfError::Dimension {
            op: "init_factors",
            expected: (m_rows, n_cols),
            got: data.shape(),
        });
    }
    for attempt in 0..MAX_INIT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut w = uniform(&mut rng, m_rows, r);
        let mut h = uniform(&mut rng, r, n_cols);
        let cross = data.right_product(&h)?.dot(&w)?;
        let wh_sq = gram_cols(&w).dot(&gram(&h))?;
        if cross > 0.0 && wh_sq > 0.0 {
            let s = (cross / wh_sq).sqrt();
            w.scale(s);
            h.scale(s);
            return FactorPair::new(w, h);
        }
    }
    Err(NmfError::Initialization(format!(
        "<M, WH> vanished for {MAX_INIT_ATTEMPTS} draws starting at seed {seed}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let s = SynthSpec::parse("sparse-uniform,100,80,5,0.02,0,9").unwrap();
        assert_eq!(s.kind, SynthKind::SparseUniform);
        assert_eq!((s.m, s.n, s.r_true, s.seed), (100, 80, 5, 9));
        assert_eq!(SynthSpec::parse(&s.to_string()).unwrap(), s);
        assert!(SynthSpec::parse("planted-lowrank,1,2").is_err());
        assert!(SynthSpec::parse("blobs,1,2,1,1,0").is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(synth_matrix(SynthKind::SparseUniform, 5, 5, 1, 0.0, 0.0, 1).is_err());
        assert!(synth_matrix(SynthKind::SparseUniform, 5, 5, 1, 1.5, 0.0, 1).is_err());
        assert!(synth_matrix(SynthKind::PlantedLowRank, 5, 5, 0, 1.0, 0.0, 1).is_err());
        assert!(synth_matrix(SynthKind::UniformDense, 0, 5, 1, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn init_scaling_makes_unit_multiplier() {
        let m = synth_matrix(SynthKind::UniformDense, 12, 9, 0, 1.0, 0.0, 3).unwrap();
        let f = init_factors(12, 9, 3, 42, &m).unwrap();
        let cross = m.right_product(&f.h).unwrap().dot(&f.w).unwrap();
        let wh_sq = gram_cols(&f.w).dot(&gram(&f.h)).unwrap();
        assert!((cross / wh_sq - 1.0).abs() < 1e-10);
    }

    #[test]
    fn init_is_deterministic() {
        let m = synth_matrix(SynthKind::UniformDense, 6, 5, 0, 1.0, 0.0, 1).unwrap();
        assert_eq!(init_factors(6, 5, 2, 7, &m).unwrap(), init_factors(6, 5, 2, 7, &m).unwrap());
        assert_ne!(init_factors(6, 5, 2, 7, &m).unwrap(), init_factors(6, 5, 2, 8, &m).unwrap());
    }

    #[test]
    fn init_on_zero_matrix_errors() {
        let m = Matrix::Sparse(SparseMatrix::zeros(4, 4));
        assert!(matches!(init_factors(4, 4, 2, 0, &m), Err(NmfError::Initialization(_))));
    }
}
