use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nmf_accel::accel::{calibrate_rho, run_nmf_with_rho, AccelConfig, CostModel, RhoEstimate};
use nmf_accel::harness::{
    init_factors, nnls_check, run_experiment, write_trace_csv, DatasetSource, ExperimentSpec,
    MatrixFormat, SynthSpec,
};
use nmf_accel::linalg::{DataMatrix, Matrix};
use nmf_accel::updates::Algorithm;
use nmf_accel::{NmfError, Result};

#[derive(Parser)]
#[command(name = "nmf-accel", version, about = "Accelerated NMF updates and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize one matrix and write its trace.
    Run(RunArgs),
    /// Run an experiment file (multiple configurations and seeds).
    Bench(BenchArgs),
    /// Compare the model rho with the measured one.
    Calibrate(CalibrateArgs),
    /// Check the NNLS solver against brute-force enumeration.
    NnlsCheck(NnlsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mm,
    Csv,
    Raw,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Mm => MatrixFormat::MatrixMarket,
            FormatArg::Csv => MatrixFormat::DenseCsv,
            FormatArg::Raw => MatrixFormat::RawF64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Mu,
    Hals,
    Pg,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Mu => Algorithm::Mu,
            AlgoArg::Hals => Algorithm::Hals,
            AlgoArg::Pg => Algorithm::Pg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum RhoArg {
    Model,
    Measured,
}

#[derive(Args)]
struct DataArgs {
    /// Input matrix file.
    #[arg(long, conflicts_with = "synth")]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mm")]
    format: FormatArg,
    /// Synthetic matrix: kind,m,n,r,density,noise[,seed]
    /// (kinds: uniform-dense, planted-lowrank, sparse-uniform).
    #[arg(long)]
    synth: Option<String>,
    /// Factorization rank.
    #[arg(long)]
    rank: usize,
    /// Seed of the initial factors.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<Matrix> {
        let source = match (&self.input, &self.synth) {
            (Some(p), None) => DatasetSource::File {
                path: p.clone(),
                format: self.format.into(),
            },
            (None, Some(s)) => DatasetSource::Synth(SynthSpec::parse(s)?),
            _ => return Err(NmfError::InvalidConfig("give exactly one of --input or --synth".into())),
        };
        source.load()
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "hals")]
    algo: AlgoArg,
    /// Inner-budget multiplier; 0 disables acceleration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Inner-loop relative improvement threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Lower bound on MU entries.
    #[arg(long)]
    delta: Option<f64>,
    /// Number of consecutive seeds to run, starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    /// Seconds per run.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, value_enum, default_value = "model")]
    rho: RhoArg,
    /// Directory for trace CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment file.
    spec: PathBuf,
    /// Overrides the output directory of the experiment file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed list with 0..N.
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "hals")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 9)]
    repetitions: usize,
}

#[derive(Args)]
struct NnlsArgs {
    #[arg(long, default_value_t = 500)]
    problems: usize,
    /// Largest number of variables (at most 16).
    #[arg(long, default_value_t = 10)]
    max_vars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: RunArgs) -> Result<()> {
    let m = args.data.load()?;
    let (rows, cols) = m.shape();
    let algo: Algorithm = args.algo.into();
    let preset = AccelConfig::accelerated(algo);
    let mut cfg = AccelConfig::new(
        algo,
        args.alpha.unwrap_or(preset.alpha),
        args.epsilon.unwrap_or(preset.epsilon),
    )
    .with_max_outer(Some(args.max_outer))
    .with_time_budget(args.time_budget.map(Duration::from_secs_f64));
    if let Some(d) = args.delta {
        cfg = cfg.with_delta(d);
    }

    let model = CostModel::new(rows, cols, args.data.rank, m.nnz())?;
    for seed in args.data.seed..args.data.seed + args.seeds {
        let init = init_factors(rows, cols, args.data.rank, seed, &m)?;
        let rho = match args.rho {
            RhoArg::Model => RhoEstimate::from(&model),
            RhoArg::Measured => calibrate_rho(&m, &init, algo, 9)?.into(),
        };
        let trace = run_nmf_with_rho(&m, &init, &cfg.clone().with_seed(seed), rho)?;
        let path = args.out.join(format!("trace_seed{seed}.csv"));
        write_trace_csv(&path, &trace.samples)?;
        println!(
            "{} seed={seed} rho_w={:.3} rho_h={:.3} ({}) budgets={}/{} outer={} error {:.6e} -> {:.6e} trace={}",
            cfg.label(),
            rho.rho_w,
            rho.rho_h,
            rho.source.name(),
            trace.budget_w,
            trace.budget_h,
            trace.outer_iterations(),
            trace.initial_error(),
            trace.final_error(),
            path.display()
        );
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut spec = ExperimentSpec::from_file(&args.spec)?;
    if let Some(out) = args.out {
        spec.output = Some(out);
    }
    if let Some(n) = args.seeds {
        spec.seeds = (0..n).collect();
    }
    let summary = run_experiment(&spec)?;
    println!("e_min={:.6e}{}", summary.e_min, if summary.degenerate { " (degenerate)" } else { "" });
    for c in &summary.configs {
        let times: Vec<String> = c
            .mean_time_to
            .iter()
            .map(|(thr, t)| format!("E<={thr}: {}", t.map_or("never".into(), |v| format!("{v:.3}s"))))
            .collect();
        println!(
            "{:<24} runs={} median_t(E<=0.01)={:.3}s  {}",
            c.label,
            c.traces.len(),
            c.median_time_to_001(),
            times.join("  ")
        );
    }
    for f in &summary.failures {
        eprintln!("failed: {} seed {}: {}", f.label, f.seed, f.message);
    }
    if let Some(dir) = &spec.output {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let m = args.data.load()?;
    let (rows, cols) = m.shape();
    let model = CostModel::new(rows, cols, args.data.rank, m.nnz())?;
    let init = init_factors(rows, cols, args.data.rank, args.data.seed, &m)?;
    let measured = calibrate_rho(&m, &init, args.algo.into(), args.repetitions)?;
    println!("side  model      measured   ratio");
    println!("W     {:<10.3} {:<10.3} {:.3}", model.rho_w, measured.rho_w, measured.rho_w / model.rho_w);
    println!("H     {:<10.3} {:<10.3} {:.3}", model.rho_h, measured.rho_h, measured.rho_h / model.rho_h);
    Ok(())
}

fn check(args: NnlsArgs) -> Result<bool> {
    let report = nnls_check(args.problems, args.max_vars, args.seed, 1e-9)?;
    println!(
        "checked {} problems, max relative objective gap {:.3e}, {} failures",
        report.problems,
        report.max_rel_gap,
        report.failures.len()
    );
    for f in &report.failures {
        println!("  {f}");
    }
    Ok(report.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Bench(a) => bench(a).map(|_| true),
        Command::Calibrate(a) => calibrate(a).map(|_| true),
        Command::NnlsCheck(a) => check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
