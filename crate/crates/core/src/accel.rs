//! Accelerated outer/inner iteration scheme.
//!
//! Computing `A = M Hᵀ` dominates the cost of one update of `W`; once it is
//! available, further updates of `W` are cheap. The cost model quantifies the
//! ratio `rho` between the first update and the following ones, and each
//! factor is updated up to `floor(1 + alpha * rho)` times before switching,
//! stopping earlier once an update moves the factor by at most `epsilon`
//! times the first move.

use std::time::{Duration, Instant};

use log::warn;

use crate::error::{NmfError, Result};
use crate::linalg::{gram, gram_cols, residual_norm, DataMatrix, DenseMatrix};
use crate::updates::{Algorithm, PgParams, Safeguards, Side, UpdateRule};

/// Flop-count model of one factor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Number of nonzeros of the data matrix.
    pub k: usize,
    /// Cost of the first update of `W` relative to the next ones.
    pub rho_w: f64,
    /// Same for `H`.
    pub rho_h: f64,
}

impl CostModel {
    pub fn new(m: usize, n: usize, r: usize, k: usize) -> Result<Self> {
        if m == 0 || n == 0 || r == 0 {
            return Err(NmfError::InvalidConfig(format!(
                "cost model needs m, n, r >= 1 (got {m}, {n}, {r})"
            )));
        }
        if k > m * n {
            return Err(NmfError::InvalidConfig(format!("nnz {k} exceeds {m}x{n}")));
        }
        if r >= m.min(n) {
            warn!("rank {r} is not below min(m, n) = {}", m.min(n));
        }
        let (mf, nf, rf, kf) = (m as f64, n as f64, r as f64, k as f64);
        Ok(Self {
            m,
            n,
            r,
            k,
            rho_w: 1.0 + (kf + nf * rf) / (mf * rf + mf),
            rho_h: 1.0 + (kf + mf * rf) / (nf * rf + nf),
        })
    }

    /// Cost model for a data matrix and target rank.
    pub fn for_matrix<M: DataMatrix + ?Sized>(m: &M, r: usize) -> Result<Self> {
        let (rows, cols) = m.shape();
        Self::new(rows, cols, r, m.nnz())
    }

    /// Whether the factors are smaller than the data: `r (m + n) <= K`.
    pub fn compresses(&self) -> bool {
        self.r * (self.m + self.n) <= self.k
    }

    pub fn rank_exceeds_dims(&self) -> bool {
        self.r >= self.m.min(self.n)
    }

    pub fn budget_w(&self, alpha: f64) -> usize {
        inner_budget(alpha, self.rho_w)
    }

    pub fn budget_h(&self, alpha: f64) -> usize {
        inner_budget(alpha, self.rho_h)
    }
}

/// `floor(1 + alpha * rho)`, never below one.
pub fn inner_budget(alpha: f64, rho: f64) -> usize {
    let v = (1.0 + alpha * rho).floor();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// Repeats `update` on `f0` at most `budget` times.
///
/// After iterate `l` the loop stops when `||F_l − F_{l−1}|| <= epsilon ||F_1 − F_0||`.
/// Returns the last iterate and the number of updates applied.
pub fn inner_loop<U>(f0: &DenseMatrix, budget: usize, epsilon: f64, mut update: U) -> Result<(DenseMatrix, usize)>
where
    U: FnMut(&DenseMatrix) -> Result<DenseMatrix>,
{
    let budget = budget.max(1);
    let mut current = f0.clone();
    let mut first_move = 0.0;
    for l in 1..=budget {
        let next = update(&current)?;
        let moved = next.distance(&current)?;
        if l == 1 {
            first_move = moved;
        }
        current = next;
        if moved <= epsilon * first_move {
            return Ok((current, l));
        }
    }
    Ok((current, budget))
}

/// Run parameters for [`run_nmf`].
#[derive(Debug, Clone, PartialEq)]
pub struct AccelConfig {
    pub algo: Algorithm,
    pub alpha: f64,
    pub epsilon: f64,
    pub safeguards: Safeguards,
    pub pg_params: PgParams,
    /// `None` means unbounded.
    pub max_outer: Option<usize>,
    /// `None` means unbounded.
    pub time_budget: Option<Duration>,
    pub seed: u64,
}

impl AccelConfig {
    /// A configuration with the given algorithm and acceleration parameters and default safeguards.
    pub fn new(algo: Algorithm, alpha: f64, epsilon: f64) -> Self {
        Self {
            algo,
            alpha,
            epsilon,
            safeguards: Safeguards::default(),
            pg_params: PgParams::default(),
            max_outer: Some(100),
            time_budget: None,
            seed: 0,
        }
    }

    /// The unaccelerated algorithm: one update per factor and outer iteration.
    pub fn plain(algo: Algorithm) -> Self {
        Self::new(algo, 0.0, 0.0)
    }

    /// The recommended accelerated preset: A-MU (2, 0.1), A-HALS (0.5, 0.1), A-PG (0.5, 0).
    pub fn accelerated(algo: Algorithm) -> Self {
        match algo {
            Algorithm::Mu => Self::new(algo, 2.0, 0.1),
            Algorithm::Hals => Self::new(algo, 0.5, 0.1),
            Algorithm::Pg => Self::new(algo, 0.5, 0.0),
        }
    }

    pub fn with_max_outer(mut self, max_outer: Option<usize>) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn with_time_budget(mut self, budget: Option<Duration>) -> Self {
        self.time_budget = budget;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.safeguards.delta = delta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn label(&self) -> String {
        let prefix = if self.alpha > 0.0 { "A-" } else { "" };
        format!(
            "{prefix}{}(alpha={},eps={})",
            self.algo.name().to_ascii_uppercase(),
            self.alpha,
            self.epsilon
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(NmfError::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(NmfError::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.max_outer.is_none() && self.time_budget.is_none() {
            return Err(NmfError::InvalidConfig(
                "max_outer and time_budget cannot both be unbounded".into(),
            ));
        }
        self.safeguards.validate()?;
        self.pg_params.validate()
    }
}

/// Where the `rho` values that set the inner budgets came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSource {
    Model,
    Measured,
}

impl RhoSource {
    pub fn name(self) -> &'static str {
        match self {
            RhoSource::Model => "model",
            RhoSource::Measured => "measured",
        }
    }
}

/// The `rho` pair used for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho_w: f64,
    pub rho_h: f64,
    pub source: RhoSource,
}

impl From<&CostModel> for RhoEstimate {
    fn from(cm: &CostModel) -> Self {
        Self {
            rho_w: cm.rho_w,
            rho_h: cm.rho_h,
            source: RhoSource::Model,
        }
    }
}

/// Nonnegative factors `W` (`m x r`) and `H` (`r x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

impl FactorPair {
    pub fn new(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(NmfError::Dimension {
                op: "FactorPair",
                expected: (w.rows(), w.cols()),
                got: h.shape(),
            });
        }
        Ok(Self { w, h })
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub(crate) fn check_against(&self, shape: (usize, usize)) -> Result<()> {
        if self.w.rows() != shape.0 || self.h.cols() != shape.1 || self.w.cols() != self.h.rows() {
            return Err(NmfError::Dimension {
                op: "factors vs data",
                expected: shape,
                got: (self.w.rows(), self.h.cols()),
            });
        }
        Ok(())
    }
}

/// One row of a run trace. Sample 0 is the initial point with zero inner counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub outer_iter: usize,
    /// Seconds on the run clock, which is paused while errors are evaluated.
    pub elapsed_s: f64,
    /// `||M − WH||_F`.
    pub error: f64,
    pub w_inner: usize,
    pub h_inner: usize,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub samples: Vec<TraceSample>,
    pub config: AccelConfig,
    pub rho: RhoEstimate,
    pub budget_w: usize,
    pub budget_h: usize,
    pub factors: FactorPair,
    /// Number of PG line searches that failed to find a step.
    pub pg_stalls: usize,
}

impl RunTrace {
    pub fn initial_error(&self) -> f64 {
        self.samples[0].error
    }

    pub fn final_error(&self) -> f64 {
        self.samples.last().expect("trace has an initial sample").error
    }

    pub fn outer_iterations(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.error).collect()
    }
}

/// A stopwatch that can be paused.
#[derive(Debug)]
struct RunClock {
    accumulated: Duration,
    started: Option<Instant>,
}

impl RunClock {
    fn started() -> Self {
        Self {
            accumulated: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.accumulated += t.elapsed();
        }
    }

    fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    fn elapsed(&self) -> Duration {
        self.accumulated + self.started.map_or(Duration::ZERO, |t| t.elapsed())
    }
}

/// Runs the accelerated scheme with budgets from the flop-count model.
pub fn run_nmf<M: DataMatrix + ?Sized>(m: &M, init: &FactorPair, cfg: &AccelConfig) -> Result<RunTrace> {
    let cm = CostModel::for_matrix(m, init.rank())?;
    run_nmf_with_rho(m, init, cfg, RhoEstimate::from(&cm))
}

/// Runs the accelerated scheme with explicit `rho` values.
///
/// Each outer iteration computes `A = M Hᵀ` and `H Hᵀ`, updates `W` up to
/// `floor(1 + alpha rho_w)` times, then computes `Wᵀ M` and `Wᵀ W` and updates
/// `H` up to `floor(1 + alpha rho_h)` times. `M` is multiplied exactly twice
/// per outer iteration.
pub fn run_nmf_with_rho<M: DataMatrix + ?Sized>(
    m: &M,
    init: &FactorPair,
    cfg: &AccelConfig,
    rho: RhoEstimate,
) -> Result<RunTrace> {
    cfg.validate()?;
    init.check_against(m.shape())?;
    for (name, f) in [("W", &init.w), ("H", &init.h)] {
        if let Some((i, j, v)) = f.first_negative() {
            return Err(NmfError::Precondition(format!(
                "initial {name} has negative entry {v} at ({i}, {j})"
            )));
        }
    }

    let mut w = init.w.clone();
    let mut h = init.h.clone();
    if cfg.algo == Algorithm::Mu && cfg.safeguards.delta > 0.0 {
        let delta = cfg.safeguards.delta;
        w.as_mut_slice().iter_mut().for_each(|v| *v = v.max(delta));
        h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(delta));
    }

    let budget_w = inner_budget(cfg.alpha, rho.rho_w);
    let budget_h = inner_budget(cfg.alpha, rho.rho_h);
    let mut rule = UpdateRule::new(cfg.algo, cfg.safeguards, cfg.pg_params);

    let msq = m.frob_norm_sq();
    // The first W phase reuses these, so the initial error costs no extra product.
    let mut a = m.right_product(&h)?;
    let mut b = gram(&h);
    let e0 = residual_norm(msq, a.dot(&w)?, &gram_cols(&w), &b);

    let mut samples = vec![TraceSample {
        outer_iter: 0,
        elapsed_s: 0.0,
        error: e0,
        w_inner: 0,
        h_inner: 0,
    }];

    let mut clock = RunClock::started();
    let mut k = 0usize;
    loop {
        if cfg.max_outer.is_some_and(|max| k >= max) {
            break;
        }
        if cfg.time_budget.is_some_and(|budget| clock.elapsed() >= budget) {
            break;
        }

        if k > 0 {
            a = m.right_product(&h)?;
            b = gram(&h);
        }
        rule.reset_step();
        let (w_new, w_inner) = inner_loop(&w, budget_w, cfg.epsilon, |f| rule.apply(Side::W, f, &a, &b))?;
        w = w_new;

        let c = m.left_product(&w)?;
        let wtw = gram_cols(&w);
        rule.reset_step();
        let (h_new, h_inner) = inner_loop(&h, budget_h, cfg.epsilon, |f| rule.apply(Side::H, f, &c, &wtw))?;
        h = h_new;
        k += 1;

        clock.pause();
        let error = residual_norm(msq, c.dot(&h)?, &wtw, &gram(&h));
        let elapsed_s = clock.elapsed().as_secs_f64();
        samples.push(TraceSample {
            outer_iter: k,
            elapsed_s,
            error,
            w_inner,
            h_inner,
        });
        clock.resume();
    }

    Ok(RunTrace {
        samples,
        config: cfg.clone(),
        rho,
        budget_w,
        budget_h,
        factors: FactorPair { w, h },
        pg_stalls: rule.stalls(),
    })
}

/// Measures durations of closures; abstracted so calibration can be tested with scripted timings.
pub trait Stopwatch {
    fn measure(&mut self, work: &mut dyn FnMut()) -> Duration;

    /// Smallest duration the clock can distinguish.
    fn granularity(&self) -> Duration;
}

/// Wall-clock stopwatch on [`Instant`].
#[derive(Debug, Clone)]
pub struct MonotonicStopwatch {
    granularity: Duration,
}

impl MonotonicStopwatch {
    pub fn new() -> Self {
        // Smallest observed nonzero tick over a few probes.
        let mut best = Duration::from_secs(1);
        for _ in 0..16 {
            let t0 = Instant::now();
            let mut t1 = Instant::now();
            while t1 == t0 {
                t1 = Instant::now();
            }
            best = best.min(t1 - t0);
        }
        Self { granularity: best }
    }
}

impl Default for MonotonicStopwatch {
    fn default() -> Self {
        Self::new()
    }
}

impl Stopwatch for MonotonicStopwatch {
    fn measure(&mut self, work: &mut dyn FnMut()) -> Duration {
        let t = Instant::now();
        work();
        t.elapsed()
    }

    fn granularity(&self) -> Duration {
        self.granularity
    }
}

/// Measured cost ratios of first vs. subsequent updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredRho {
    pub rho_w: f64,
    pub rho_h: f64,
}

impl From<MeasuredRho> for RhoEstimate {
    fn from(m: MeasuredRho) -> Self {
        Self {
            rho_w: m.rho_w,
            rho_h: m.rho_h,
            source: RhoSource::Measured,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median time of one `work()` call. Calls are batched until a batch lasts
/// at least ten clock ticks.
fn median_time(clock: &mut dyn Stopwatch, repetitions: usize, work: &mut dyn FnMut()) -> f64 {
    let floor = clock.granularity().as_secs_f64() * 10.0;
    let mut batch = 1usize;
    loop {
        let mut times: Vec<f64> = (0..repetitions)
            .map(|_| {
                let mut run_batch = || {
                    for _ in 0..batch {
                        work();
                    }
                };
                clock.measure(&mut run_batch).as_secs_f64() / batch as f64
            })
            .collect();
        let med = median(&mut times);
        if med * batch as f64 >= floor || batch >= 1 << 20 {
            return med;
        }
        batch *= 2;
    }
}

/// Measures `rho` with the real clock.
pub fn calibrate_rho<M: DataMatrix + ?Sized>(
    m: &M,
    factors: &FactorPair,
    algo: Algorithm,
    repetitions: usize,
) -> Result<MeasuredRho> {
    calibrate_rho_with(&mut MonotonicStopwatch::new(), m, factors, algo, repetitions)
}

/// Measures `rho` for each side as `T_first / T_next`, where `T_first` covers
/// the products plus one update and `T_next` is the median of one update.
pub fn calibrate_rho_with<M: DataMatrix + ?Sized>(
    clock: &mut dyn Stopwatch,
    m: &M,
    factors: &FactorPair,
    algo: Algorithm,
    repetitions: usize,
) -> Result<MeasuredRho> {
    if repetitions < 3 {
        return Err(NmfError::InvalidConfig(format!(
            "calibration needs at least 3 repetitions, got {repetitions}"
        )));
    }
    factors.check_against(m.shape())?;
    let (w, h) = (&factors.w, &factors.h);
    let mut rule = UpdateRule::new(algo, Safeguards::default(), PgParams::default());
    let mut failure: Option<NmfError> = None;

    let mut side_ratio = |side: Side, clock: &mut dyn Stopwatch| -> f64 {
        let first = |rule: &mut UpdateRule, failure: &mut Option<NmfError>| {
            let res = match side {
                Side::W => m
                    .right_product(h)
                    .and_then(|a| rule.apply(side, w, &a, &gram(h))),
                Side::H => m
                    .left_product(w)
                    .and_then(|c| rule.apply(side, h, &c, &gram_cols(w))),
            };
            if let Err(e) = res {
                failure.get_or_insert(e);
            }
        };
        let mut t_first: Vec<f64> = (0..repetitions)
            .map(|_| {
                clock
                    .measure(&mut || {
                        rule.reset_step();
                        first(&mut rule, &mut failure)
                    })
                    .as_secs_f64()
            })
            .collect();
        let t_first = median(&mut t_first);

        let (f, a, b) = match side {
            Side::W => (w.clone(), m.right_product(h), gram(h)),
            Side::H => (h.clone(), m.left_product(w), gram_cols(w)),
        };
        let a = match a {
            Ok(a) => a,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::NAN;
            }
        };
        let t_next = median_time(clock, repetitions, &mut || {
            rule.reset_step();
            if let Err(e) = rule.apply(side, &f, &a, &b) {
                failure.get_or_insert(e);
            }
        });
        if t_next > 0.0 {
            t_first / t_next
        } else {
            f64::INFINITY
        }
    };

    let rho_w = side_ratio(Side::W, clock);
    let rho_h = side_ratio(Side::H, clock);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(MeasuredRho { rho_w, rho_h })
}
