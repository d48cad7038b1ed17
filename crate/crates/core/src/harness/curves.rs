//! Normalized error curves `E(t) = (e(t) − e_min) / (e(0) − e_min)`.

use crate::accel::{RunTrace, TraceSample};
use crate::error::{NmfError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Curves for several groups of traces sharing one `e_min`.
#[derive(Debug, Clone)]
pub struct NormalizedCurves {
    /// Smallest error seen in any trace of any group.
    pub e_min: f64,
    /// One curve per group, evaluated on the common grid.
    pub curves: Vec<Vec<CurvePoint>>,
    /// Set when some trace has `e(0) <= e_min`; its curve is reported as zero.
    pub degenerate: bool,
}

/// `n` evenly spaced points on `[0, t_max]`, both ends included.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Error of the last sample recorded at or before `t` (step interpolation).
pub fn error_at(samples: &[TraceSample], t: f64) -> f64 {
    let idx = samples.partition_point(|s| s.elapsed_s <= t);
    samples[idx.saturating_sub(1)].error
}

pub fn normalized(e: f64, e0: f64, e_min: f64) -> Option<f64> {
    let gap = e0 - e_min;
    if gap > 0.0 {
        Some(((e - e_min) / gap).max(0.0))
    } else {
        None
    }
}

pub fn min_error<'a>(traces: impl IntoIterator<Item = &'a RunTrace>) -> f64 {
    traces
        .into_iter()
        .flat_map(|t| t.samples.iter().map(|s| s.error))
        .fold(f64::INFINITY, f64::min)
}

/// Aggregates each group over its traces (typically one trace per seed).
pub fn normalized_curves(groups: &[&[RunTrace]], grid: &[f64]) -> Result<NormalizedCurves> {
    if groups.iter().any(|g| g.is_empty()) {
        return Err(NmfError::InvalidConfig("every curve group needs at least one trace".into()));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|t| t.samples.is_empty()) {
        return Err(NmfError::InvalidConfig("trace without samples".into()));
    }
    let e_min = min_error(groups.iter().flat_map(|g| g.iter()));
    let mut degenerate = false;
    let mut curves = Vec::with_capacity(groups.len());
    for group in groups {
        let mut points = Vec::with_capacity(grid.len());
        for &t in grid {
            let mut sum = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for trace in group.iter() {
                let e0 = trace.initial_error();
                let v = match normalized(error_at(&trace.samples, t), e0, e_min) {
                    Some(v) => v,
                    None => {
                        degenerate = true;
                        0.0
                    }
                };
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            points.push(CurvePoint {
                t,
                mean: sum / group.len() as f64,
                min: lo,
                max: hi,
            });
        }
        curves.push(points);
    }
    Ok(NormalizedCurves {
        e_min,
        curves,
        degenerate,
    })
}

/// First grid time at which the mean curve is at or below `threshold`.
pub fn curve_time_to(points: &[CurvePoint], threshold: f64) -> Option<f64> {
    points.iter().find(|p| p.mean <= threshold).map(|p| p.t)
}

/// First recorded time at which a single trace reaches `E <= threshold`.
pub fn trace_time_to(trace: &RunTrace, e_min: f64, threshold: f64) -> Option<f64> {
    let e0 = trace.initial_error();
    trace
        .samples
        .iter()
        .find(|s| normalized(s.error, e0, e_min).is_none_or(|v| v <= threshold))
        .map(|s| s.elapsed_s)
}

/// Median with `None` treated as +infinity.
pub fn median_time(times: &[Option<f64>]) -> f64 {
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
