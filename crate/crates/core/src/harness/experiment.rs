//! Multi-configuration, multi-seed experiments.
//!
//! An experiment file holds `key = value` lines (`#` starts a comment):
//!
//! ```text
//! dataset     = synth:planted-lowrank,300,200,10,1.0,0.01,7
//! # or: dataset = file:data/m.mtx,mm
//! rank        = 10
//! seeds       = 0,1,2        # or a range: 0..5
//! time_budget = 2.0          # seconds per run
//! max_outer   = 1000
//! grid_points = 200
//! workers     = 1
//! output      = out/exp1
//! config      = label:MU algo:mu alpha:0 epsilon:0
//! config      = label:A-MU algo:mu alpha:2 epsilon:0.1 rho:measured
//! ```
//!
//! `config` lines accept `label`, `algo`, `alpha`, `epsilon`, `delta`,
//! `rho` (`model` or `measured`), `max_outer` and `time_budget`; the last two
//! override the global values. All configurations of a seed start from the
//! same factors.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use crate::accel::{calibrate_rho, run_nmf_with_rho, AccelConfig, CostModel, FactorPair, RhoEstimate, RunTrace};
use crate::error::{NmfError, Result};
use crate::linalg::{DataMatrix, Matrix};
use crate::updates::Algorithm;

use super::curves::{curve_time_to, median_time, normalized_curves, time_grid, trace_time_to, CurvePoint};
use super::io::{load_matrix, path_for, write_curve_csv, write_summary, write_trace_csv, MatrixFormat};
use super::synth::{init_factors, SynthSpec};

/// Thresholds reported for every configuration.
pub const REPORT_THRESHOLDS: [f64; 3] = [0.1, 0.01, 0.001];

const CALIBRATION_REPS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File { path: PathBuf, format: MatrixFormat },
    Synth(SynthSpec),
}

impl DatasetSource {
    /// Parses `synth:<spec>` or `file:<path>[,<format>]`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("synth:") {
            return Ok(DatasetSource::Synth(SynthSpec::parse(rest)?));
        }
        if let Some(rest) = s.strip_prefix("file:") {
            let (path, format) = match rest.rsplit_once(',') {
                Some((p, f)) => (p, f.parse()?),
                None => (rest, MatrixFormat::MatrixMarket),
            };
            return Ok(DatasetSource::File {
                path: PathBuf::from(path),
                format,
            });
        }
        Err(NmfError::InvalidConfig(format!(
            "dataset '{s}' must start with 'synth:' or 'file:'"
        )))
    }

    pub fn load(&self) -> Result<Matrix> {
        match self {
            DatasetSource::File { path, format } => load_matrix(path, *format),
            DatasetSource::Synth(spec) => spec.generate(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DatasetSource::File { path, .. } => path.display().to_string(),
            DatasetSource::Synth(spec) => format!("synth:{spec}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoMode {
    #[default]
    Model,
    Measured,
}

impl std::str::FromStr for RhoMode {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(RhoMode::Model),
            "measured" => Ok(RhoMode::Measured),
            other => Err(NmfError::InvalidConfig(format!("rho must be model or measured, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledConfig {
    pub label: String,
    pub config: AccelConfig,
    pub rho: RhoMode,
}

impl LabeledConfig {
    pub fn new(config: AccelConfig) -> Self {
        Self {
            label: config.label(),
            config,
            rho: RhoMode::Model,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub rank: usize,
    pub configs: Vec<LabeledConfig>,
    pub seeds: Vec<u64>,
    pub grid_points: usize,
    /// `None` or `Some(0)` means one worker per available core.
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> NmfError {
    NmfError::InvalidConfig(format!("experiment line {line}: {msg}"))
}

fn parse_seconds(v: &str, line: usize) -> Result<Duration> {
    let s: f64 = v.parse().map_err(|_| bad(line, format!("bad duration '{v}'")))?;
    Duration::try_from_secs_f64(s).map_err(|_| bad(line, format!("bad duration '{v}'")))
}

fn parse_seeds(v: &str, line: usize) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(line, "bad seed range"))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(line, "bad seed range"))?;
        return Ok((a..b).collect());
    }
    v.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| bad(line, format!("bad seed '{t}'"))))
        .collect()
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| NmfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dataset = None;
        let mut rank = None;
        let mut seeds = Vec::new();
        let mut time_budget = None;
        let mut max_outer = None;
        let mut grid_points = 200;
        let mut workers = None;
        let mut output = None;
        let mut raw_configs = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset" => dataset = Some(DatasetSource::parse(value)?),
                "rank" => rank = Some(value.parse::<usize>().map_err(|_| bad(line, "bad rank"))?),
                "seeds" => seeds = parse_seeds(value, line)?,
                "time_budget" => time_budget = Some(parse_seconds(value, line)?),
                "max_outer" => max_outer = Some(value.parse::<usize>().map_err(|_| bad(line, "bad max_outer"))?),
                "grid_points" => grid_points = value.parse().map_err(|_| bad(line, "bad grid_points"))?,
                "workers" => workers = Some(value.parse().map_err(|_| bad(line, "bad workers"))?),
                "output" => output = Some(PathBuf::from(value)),
                "config" => raw_configs.push((line, value.to_string())),
                other => return Err(bad(line, format!("unknown key '{other}'"))),
            }
        }

        let mut configs = Vec::new();
        for (line, value) in raw_configs {
            let mut algo = None;
            let mut label = None;
            let mut alpha = None;
            let mut epsilon = None;
            let mut delta = None;
            let mut rho = RhoMode::Model;
            let mut cfg_outer = max_outer;
            let mut cfg_budget = time_budget;
            for tok in value.split_whitespace() {
                let (k, v) = tok
                    .split_once(':')
                    .ok_or_else(|| bad(line, format!("config token '{tok}' must be key:value")))?;
                let num = || v.parse::<f64>().map_err(|_| bad(line, format!("bad number '{v}'")));
                match k {
                    "label" => label = Some(v.to_string()),
                    "algo" => algo = Some(v.parse::<Algorithm>()?),
                    "alpha" => alpha = Some(num()?),
                    "epsilon" => epsilon = Some(num()?),
                    "delta" => delta = Some(num()?),
                    "rho" => rho = v.parse()?,
                    "max_outer" => cfg_outer = Some(v.parse().map_err(|_| bad(line, "bad max_outer"))?),
                    "time_budget" => cfg_budget = Some(parse_seconds(v, line)?),
                    other => return Err(bad(line, format!("unknown config key '{other}'"))),
                }
            }
            let algo = algo.ok_or_else(|| bad(line, "config needs algo"))?;
            let mut cfg = AccelConfig::new(algo, alpha.unwrap_or(0.0), epsilon.unwrap_or(0.0))
                .with_max_outer(cfg_outer)
                .with_time_budget(cfg_budget);
            if let Some(d) = delta {
                cfg = cfg.with_delta(d);
            }
            let mut lc = LabeledConfig::new(cfg);
            lc.rho = rho;
            if let Some(l) = label {
                lc.label = l;
            }
            configs.push(lc);
        }

        let spec = Self {
            dataset: dataset.ok_or_else(|| NmfError::InvalidConfig("experiment needs a dataset".into()))?,
            rank: rank.ok_or_else(|| NmfError::InvalidConfig("experiment needs a rank".into()))?,
            configs,
            seeds,
            grid_points,
            workers,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(NmfError::InvalidConfig("experiment has no seeds".into()));
        }
        if self.configs.is_empty() {
            return Err(NmfError::InvalidConfig("experiment has no configurations".into()));
        }
        if self.rank == 0 {
            return Err(NmfError::InvalidConfig("rank must be >= 1".into()));
        }
        if self.grid_points < 2 {
            return Err(NmfError::InvalidConfig("grid_points must be >= 2".into()));
        }
        let mut labels: Vec<&str> = self.configs.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(NmfError::InvalidConfig("configuration labels must be unique".into()));
        }
        self.configs.iter().try_for_each(|c| c.config.validate())
    }
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub label: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ConfigSummary {
    pub label: String,
    pub rho: RhoEstimate,
    /// Successful runs, in seed order.
    pub traces: Vec<(u64, RunTrace)>,
    pub curve: Vec<CurvePoint>,
    /// First grid time at which the mean curve reaches each of [`REPORT_THRESHOLDS`].
    pub mean_time_to: Vec<(f64, Option<f64>)>,
    /// Per-seed first time at which `E <= 0.01`, in seed order.
    pub seed_time_to_001: Vec<Option<f64>>,
}

impl ConfigSummary {
    /// Median over seeds of the time to `E <= 0.01`; infinite when most seeds never reach it.
    pub fn median_time_to_001(&self) -> f64 {
        median_time(&self.seed_time_to_001)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub shape: (usize, usize),
    pub nnz: usize,
    pub e_min: f64,
    pub degenerate: bool,
    pub configs: Vec<ConfigSummary>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentSummary {
    pub fn config(&self, label: &str) -> Option<&ConfigSummary> {
        self.configs.iter().find(|c| c.label == label)
    }
}

fn worker_count(requested: Option<usize>, jobs: usize) -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match requested {
        Some(n) if n > 0 => n.min(jobs).max(1),
        _ => avail.min(jobs).max(1),
    }
}

/// Loads the dataset and runs the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    let data = spec.dataset.load()?;
    run_experiment_on(spec, &data)
}

/// Runs every (configuration, seed) pair on `data`.
///
/// A failing run is recorded and the remaining runs continue. When
/// `spec.output` is set, per-run trace CSVs, per-configuration curve CSVs and
/// `summary.txt` are written there.
pub fn run_experiment_on(spec: &ExperimentSpec, data: &Matrix) -> Result<ExperimentSummary> {
    spec.validate()?;
    let (m, n) = data.shape();
    let model = CostModel::new(m, n, spec.rank, data.nnz())?;

    let mut inits: Vec<(u64, std::result::Result<FactorPair, String>)> = Vec::new();
    for &seed in &spec.seeds {
        inits.push((seed, init_factors(m, n, spec.rank, seed, data).map_err(|e| e.to_string())));
    }

    let mut rhos = Vec::with_capacity(spec.configs.len());
    for lc in &spec.configs {
        let rho = match lc.rho {
            RhoMode::Model => RhoEstimate::from(&model),
            RhoMode::Measured => {
                let factors = inits
                    .iter()
                    .find_map(|(_, f)| f.as_ref().ok())
                    .ok_or_else(|| NmfError::Initialization("no seed produced initial factors".into()))?;
                calibrate_rho(data, factors, lc.config.algo, CALIBRATION_REPS)?.into()
            }
        };
        rhos.push(rho);
    }

    // Seed-major order interleaves configurations, so slow drifts in machine
    // speed do not fall on one configuration.
    let n_cfg = spec.configs.len();
    let jobs: Vec<(usize, usize)> = (0..inits.len())
        .flat_map(|s| (0..n_cfg).map(move |c| (c, s)))
        .collect();
    let results: Mutex<Vec<Option<std::result::Result<RunTrace, String>>>> = Mutex::new(vec![None; jobs.len()]);
    let next = Mutex::new(0usize);
    let workers = worker_count(spec.workers, jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = {
                    let mut guard = next.lock().expect("job counter poisoned");
                    let j = *guard;
                    *guard += 1;
                    j
                };
                let Some(&(ci, si)) = jobs.get(job) else { break };
                let lc = &spec.configs[ci];
                let (seed, init) = &inits[si];
                let outcome = match init {
                    Ok(f) => {
                        let cfg = lc.config.clone().with_seed(*seed);
                        run_nmf_with_rho(data, f, &cfg, rhos[ci]).map_err(|e| e.to_string())
                    }
                    Err(msg) => Err(msg.clone()),
                };
                if let Err(msg) = &outcome {
                    log::warn!("run {} seed {seed} failed: {msg}", lc.label);
                }
                results.lock().expect("results poisoned")[job] = Some(outcome);
            });
        }
    });
    let results = results.into_inner().expect("results poisoned");

    let mut failures = Vec::new();
    let mut per_config: Vec<Vec<(u64, RunTrace)>> = vec![Vec::new(); spec.configs.len()];
    for (&(ci, si), outcome) in jobs.iter().zip(results) {
        let seed = inits[si].0;
        match outcome.expect("every job ran") {
            Ok(trace) => per_config[ci].push((seed, trace)),
            Err(message) => failures.push(RunFailure {
                label: spec.configs[ci].label.clone(),
                seed,
                message,
            }),
        }
    }

    let t_max = per_config
        .iter()
        .flatten()
        .filter_map(|(_, t)| t.samples.last().map(|s| s.elapsed_s))
        .fold(0.0, f64::max);
    let grid = time_grid(t_max, spec.grid_points);

    let owned: Vec<Vec<RunTrace>> = per_config
        .iter()
        .map(|v| v.iter().map(|(_, t)| t.clone()).collect())
        .collect();
    let nonempty: Vec<usize> = (0..owned.len()).filter(|&i| !owned[i].is_empty()).collect();
    let groups: Vec<&[RunTrace]> = nonempty.iter().map(|&i| owned[i].as_slice()).collect();
    let (e_min, degenerate, mut curves) = if groups.is_empty() {
        (f64::NAN, false, Vec::new())
    } else {
        let nc = normalized_curves(&groups, &grid)?;
        (nc.e_min, nc.degenerate, nc.curves)
    };

    let mut configs = Vec::with_capacity(spec.configs.len());
    for (ci, traces) in per_config.into_iter().enumerate() {
        let curve = match nonempty.iter().position(|&i| i == ci) {
            Some(pos) => std::mem::take(&mut curves[pos]),
            None => Vec::new(),
        };
        let mean_time_to = REPORT_THRESHOLDS
            .iter()
            .map(|&thr| (thr, curve_time_to(&curve, thr)))
            .collect();
        let seed_time_to_001 = traces.iter().map(|(_, t)| trace_time_to(t, e_min, 0.01)).collect();
        configs.push(ConfigSummary {
            label: spec.configs[ci].label.clone(),
            rho: rhos[ci],
            traces,
            curve,
            mean_time_to,
            seed_time_to_001,
        });
    }

    let summary = ExperimentSummary {
        shape: (m, n),
        nnz: data.nnz(),
        e_min,
        degenerate,
        configs,
        failures,
    };
    if let Some(dir) = &spec.output {
        write_outputs(dir, spec, &summary)?;
    }
    Ok(summary)
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

fn write_outputs(dir: &Path, spec: &ExperimentSpec, s: &ExperimentSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| NmfError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut entries: Vec<(String, String)> = vec![
        ("dataset".into(), spec.dataset.describe()),
        ("rows".into(), s.shape.0.to_string()),
        ("cols".into(), s.shape.1.to_string()),
        ("nnz".into(), s.nnz.to_string()),
        ("rank".into(), spec.rank.to_string()),
        ("seeds".into(), spec.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
        ("e_min".into(), s.e_min.to_string()),
        ("degenerate".into(), s.degenerate.to_string()),
    ];
    for c in &s.configs {
        for (seed, trace) in &c.traces {
            write_trace_csv(&path_for(dir, &format!("trace_{}_seed{seed}.csv", c.label)), &trace.samples)?;
        }
        write_curve_csv(&path_for(dir, &format!("curve_{}.csv", c.label)), &c.curve)?;
        let k = &c.label;
        entries.push((format!("{k}.rho_source"), c.rho.source.name().into()));
        entries.push((format!("{k}.rho_w"), c.rho.rho_w.to_string()));
        entries.push((format!("{k}.rho_h"), c.rho.rho_h.to_string()));
        entries.push((format!("{k}.runs_ok"), c.traces.len().to_string()));
        for (thr, t) in &c.mean_time_to {
            entries.push((format!("{k}.mean_time_to_{thr}"), fmt_time(*t)));
        }
        entries.push((format!("{k}.median_seed_time_to_0.01"), c.median_time_to_001().to_string()));
    }
    for f in &s.failures {
        entries.push((format!("failure.{}.seed{}", f.label, f.seed), f.message.replace('\n', " ")));
    }
    write_summary(&dir.join("summary.txt"), &entries)
}
