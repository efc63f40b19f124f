//! `ipc`: estimate, simulate, validate and plot information processing capacities.
//!
//! Exit codes: 0 success, 2 parse or usage error, 3 failed precondition,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ipc_core::dataset::load_matrix_csv;
use ipc_core::estimators::{estimate, Algorithm, EstimatorConfig};
use ipc_core::factor::{estimate_noise_std, indicator_function, noise_normalize};
use ipc_core::photonic::{self, EncodingScheme, Scenario};
use ipc_core::plot::{render, PlotKind, PlotOptions};
use ipc_core::synthetic::{validation_run, SourceKind, ValidationParams};
use ipc_core::tasks::{self, BenchSystem, TaskDataset};
use ipc_core::{
    enumerate_basis, pseudo_random_points, sobol_points, Dataset, ErrorKind, SampleMatrix,
};

#[derive(Parser, Debug)]
#[command(
    name = "ipc",
    version,
    about = "Information processing capacity of stationary physical systems"
)]
struct Cli {
    /// Worker threads (0 = all cores). Ignored in sequential builds.
    #[arg(long, global = true, env = "IPC_THREADS", default_value_t = 0)]
    threads: usize,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity report for a dataset given as an inputs CSV and a readouts CSV.
    Estimate(EstimateArgs),
    /// Run Sobol or pseudo-random inputs through the simulated fiber system.
    Simulate(SimulateArgs),
    /// Compare estimated capacities with the ground truth of random synthetic systems.
    Validate(ValidateArgs),
    /// Number of significant factors from the indicator function.
    FactorDim(FactorArgs),
    /// k-fold accuracy of a linear readout on a classification task.
    Benchmark(BenchmarkArgs),
    /// Render a capacity report as an SVG capacity matrix or bar plot.
    Plot(PlotArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AlgorithmArg {
    ThresholdFirst,
    RichardsonFirst,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::ThresholdFirst => Algorithm::ThresholdFirst,
            AlgorithmArg::RichardsonFirst => Algorithm::RichardsonFirst,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SourceArg {
    Sobol,
    Prng,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long)]
    readouts: PathBuf,
    /// Number of inputs; defaults to the column count of the inputs file.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    d_max: u32,
    #[arg(long, value_enum, default_value = "threshold-first")]
    algorithm: AlgorithmArg,
    /// Do not append the constant readout.
    #[arg(long)]
    no_augment: bool,
    /// Keep the two half-sample capacities in the report.
    #[arg(long)]
    record_halves: bool,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sobol")]
    samples: SourceArg,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Set fiber length to 40 m and choose the peak power for this nonlinear phase (rad).
    #[arg(long)]
    phi: Option<f64>,
    /// Writes PREFIX_inputs.csv, PREFIX_readouts.csv and PREFIX_meta.json.
    #[arg(long, default_value = "sim")]
    out: String,
    /// Also write the output spectrum of this sample to PREFIX_spectrum_<i>.csv.
    #[arg(long)]
    dump_spectrum: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = 5)]
    q: usize,
    #[arg(long, default_value_t = 8)]
    d_max: u32,
    #[arg(long, default_value_t = 200)]
    n_sel: usize,
    #[arg(long, default_value_t = 71)]
    k: usize,
    #[arg(long, default_value_t = 8192)]
    n: usize,
    #[arg(long, value_enum, default_value = "sobol")]
    source: SourceArg,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "threshold-first")]
    algorithm: AlgorithmArg,
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value = "validation.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FactorArgs {
    /// Readouts CSV (header row, one column per readout).
    #[arg(long)]
    readouts: PathBuf,
    /// CSV of repeated measurements at a fixed input, used to estimate per-readout noise.
    #[arg(long, conflicts_with = "noise_std")]
    repeats: Option<PathBuf>,
    /// One-row CSV with the noise standard deviation of every readout.
    #[arg(long)]
    noise_std: Option<PathBuf>,
    #[arg(long, default_value = "factor.json")]
    out: PathBuf,
    /// Also write the indicator curve as CSV.
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TaskArg {
    Spirals,
    Digits,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SystemArg {
    Identity,
    Photonic,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long, value_enum, default_value = "spirals")]
    task: TaskArg,
    /// Points for the spirals task.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Gaussian jitter of the spirals.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// IDX image file for the digits task.
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file for the digits task.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Random subset size drawn from the digit images.
    #[arg(long)]
    subset: Option<usize>,
    /// Principal components kept for the digits task.
    #[arg(long, default_value_t = 5)]
    pca: usize,
    /// Task CSV (features then label) for the csv task.
    #[arg(long)]
    task_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "photonic")]
    system: SystemArg,
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Set fiber length to 40 m and choose the peak power for this nonlinear phase (rad).
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Ridge strength; defaults to 1e-8·tr(G)/K per training fold.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also score the linear baseline on the raw features.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value = "benchmark.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    report: PathBuf,
    /// `matrix` or `bars`.
    #[arg(long, default_value = "bars")]
    kind: String,
    #[arg(long, default_value_t = 0.0)]
    color_min: f64,
    #[arg(long, default_value_t = 1.0)]
    color_max: f64,
    #[arg(long)]
    degree_cap: Option<u32>,
    #[arg(long, default_value = "capacity.svg")]
    out: PathBuf,
}

struct Ctx {
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn write(&self, p: &Path, contents: &str) -> Result<PathBuf> {
        let p = self.path(p);
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    Ok(match path {
        Some(p) => {
            Scenario::load(p).with_context(|| format!("loading scenario {}", p.display()))?
        }
        None => Scenario::default(),
    })
}

fn sample_matrix(source: SourceArg, q: usize, n: usize, seed: u64) -> Result<SampleMatrix> {
    Ok(match source {
        SourceArg::Sobol => sobol_points(q, n)?,
        SourceArg::Prng => pseudo_random_points(q, n, seed),
    })
}

fn cmd_estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let mut data = Dataset::load_csv_pair(&a.inputs, &a.readouts).with_context(|| {
        format!(
            "reading {} and {}",
            a.inputs.display(),
            a.readouts.display()
        )
    })?;
    let q = a.q.unwrap_or(data.q());
    if q != data.q() {
        return Err(ipc_core::Error::DimensionMismatch {
            context: "--q vs inputs file columns",
            expected: data.q(),
            got: q,
        }
        .into());
    }
    if !a.no_augment {
        data = data.augment();
    }
    let basis = enumerate_basis(q, a.d_max)?;
    let cfg = EstimatorConfig {
        algorithm: a.algorithm.into(),
        record_halves: a.record_halves,
        ..Default::default()
    };
    let report = estimate(&data, &basis, &cfg)?;
    let p = ctx.write(&a.out, &(report.to_json()? + "\n"))?;
    println!("{}", report.summary_line());
    log::info!("report written to {}", p.display());
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut sc = load_scenario(a.scenario.as_deref())?;
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    if let Some(phi) = a.phi {
        sc = sc.with_nonlinear_phase(phi, 40.0);
    }
    let samples = sample_matrix(a.samples, sc.n_inputs(), a.n, sc.seed)?;
    let data = photonic::simulate_dataset(&samples, &sc)?;
    let inputs = ctx.path(Path::new(&format!("{}_inputs.csv", a.out)));
    let readouts = ctx.path(Path::new(&format!("{}_readouts.csv", a.out)));
    if let Some(parent) = inputs.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    data.save_csv_pair(&inputs, &readouts)?;
    let meta = serde_json::to_string_pretty(&data.meta)?;
    ctx.write(Path::new(&format!("{}_meta.json", a.out)), &(meta + "\n"))?;
    if let Some(i) = a.dump_spectrum {
        if i >= samples.n() {
            return Err(
                ipc_core::Error::InvalidArgument(format!("sample {i} does not exist")).into(),
            );
        }
        let pc = &sc.pulse;
        let pulse = photonic::make_sech_pulse(
            pc.peak_power(),
            pc.tau_fwhm_ps,
            pc.grid(),
            pc.center_wavelength_nm,
        )?;
        let enc = photonic::encode_inputs(
            &pulse,
            &samples.row(i),
            &sc.encoder,
            Some((sc.seed, i as u64)),
        )?;
        let out = photonic::propagate(&enc, &sc.fiber)?;
        let path = ctx.path(Path::new(&format!("{}_spectrum_{i}.csv", a.out)));
        let f = std::fs::File::create(&path)?;
        photonic::write_spectrum_csv(f, &photonic::spectrum_dump(&out, &sc.detector))?;
    }
    println!(
        "{} samples × {} readouts, φ_NL = {:.3} rad",
        data.n(),
        data.k(),
        sc.nonlinear_phase()
    );
    Ok(())
}

fn cmd_validate(ctx: &Ctx, a: &ValidateArgs) -> Result<()> {
    let params = ValidationParams {
        q: a.q,
        d_max: a.d_max,
        n_sel: a.n_sel,
        k: a.k,
        n: a.n,
        source: match a.source {
            SourceArg::Sobol => SourceKind::Sobol,
            SourceArg::Prng => SourceKind::PseudoRandom,
        },
        repeats: a.repeats,
        seed: a.seed,
        augment: !a.no_augment,
    };
    let cfg = EstimatorConfig {
        algorithm: a.algorithm.into(),
        ..Default::default()
    };
    let stats = validation_run(&params, &cfg)?;
    ctx.write(&a.out, &(serde_json::to_string_pretty(&stats)? + "\n"))?;
    println!(
        "mean error raw {:.3e}, corrected {:.3e}; total corrected − truth {:.3}",
        stats.mean_raw_err, stats.mean_corr_err, stats.total_err_stats.mean_err
    );
    Ok(())
}

fn cmd_factor(ctx: &Ctx, a: &FactorArgs) -> Result<()> {
    let (_, x) = load_matrix_csv(&a.readouts)
        .with_context(|| format!("reading {}", a.readouts.display()))?;
    let k = x.ncols();
    let samples = SampleMatrix::new(
        placeholder_inputs(x.nrows()),
        ipc_core::SampleSource::External,
        true,
    )?;
    let mut data = Dataset::new(samples, x)?;
    let noise = match (&a.repeats, &a.noise_std) {
        (Some(r), _) => Some(estimate_noise_std(&load_matrix_csv(r)?.1)?),
        (None, Some(s)) => Some(load_matrix_csv(s)?.1.row(0).iter().copied().collect()),
        (None, None) => None,
    };
    if let Some(sd) = noise {
        if sd.len() != k {
            return Err(ipc_core::Error::DimensionMismatch {
                context: "noise std entries vs readouts",
                expected: k,
                got: sd.len(),
            }
            .into());
        }
        data = noise_normalize(&data, &sd)?;
    } else {
        log::warn!("no noise information given; readouts are used as they are");
    }
    let curve = indicator_function(&data)?;
    ctx.write(&a.out, &(curve.to_json()? + "\n"))?;
    if let Some(p) = &a.curve_csv {
        let p = ctx.path(p);
        curve.write_csv(std::fs::File::create(&p)?)?;
    }
    match curve.argmin {
        Some(m) => println!("indicator minimum at κ = {m}"),
        None => println!("indicator has no interior minimum"),
    }
    Ok(())
}

/// Placeholder inputs for readouts-only files (a single zero column).
fn placeholder_inputs(n: usize) -> ipc_core::dataset::Matrix {
    ipc_core::dataset::Matrix::zeros(n, 1)
}

fn load_task(a: &BenchmarkArgs) -> Result<TaskDataset> {
    match a.task {
        TaskArg::Spirals => Ok(tasks::two_spirals(a.n, a.noise, a.seed)?),
        TaskArg::Csv => {
            let p = a.task_file.as_ref().ok_or_else(|| {
                ipc_core::Error::InvalidArgument("--task-file is required for the csv task".into())
            })?;
            Ok(TaskDataset::load_csv(p)?)
        }
        TaskArg::Digits => {
            let (Some(img), Some(lab)) = (&a.images, &a.labels) else {
                return Err(ipc_core::Error::InvalidArgument(
                    "--images and --labels are required for the digits task".into(),
                )
                .into());
            };
            let x = tasks::read_idx_images(img)?;
            let y = tasks::read_idx_labels(lab)?;
            if x.nrows() != y.len() {
                return Err(ipc_core::Error::DimensionMismatch {
                    context: "digit labels vs images",
                    expected: x.nrows(),
                    got: y.len(),
                }
                .into());
            }
            let rows = match a.subset {
                Some(n) => tasks::random_subset(x.nrows(), n, a.seed)?,
                None => (0..x.nrows()).collect(),
            };
            let x = x.select_rows(&rows);
            let y: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
            let (z, _) = tasks::pca_reduce(&x, a.pca)?;
            Ok(TaskDataset::new(z, y, "digits_pca")?)
        }
    }
}

fn cmd_benchmark(ctx: &Ctx, a: &BenchmarkArgs) -> Result<()> {
    let task = load_task(a)?;
    let system = match a.system {
        SystemArg::Identity => BenchSystem::Identity,
        SystemArg::Photonic => {
            let mut sc = load_scenario(a.scenario.as_deref())?;
            if a.scenario.is_none() && task.features.ncols() == 5 {
                sc.encoder.scheme = EncodingScheme::Sequential5x4;
            }
            if let Some(phi) = a.phi {
                sc = sc.with_nonlinear_phase(phi, 40.0);
            }
            BenchSystem::PhotonicSim(Box::new(sc))
        }
    };
    let result = tasks::run_benchmark(&task, &system, a.ridge, a.folds, a.seed)?;
    let baseline = if a.baseline {
        Some(tasks::run_benchmark(
            &task,
            &BenchSystem::Identity,
            a.ridge,
            a.folds,
            a.seed,
        )?)
    } else {
        None
    };
    let doc = serde_json::json!({
        "task": task.name,
        "n": task.n(),
        "result": result,
        "baseline": baseline,
    });
    ctx.write(&a.out, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    println!("accuracy {:.4} ± {:.4}", result.mean, result.std_error);
    if let Some(b) = baseline {
        println!("linear baseline {:.4} ± {:.4}", b.mean, b.std_error);
    }
    Ok(())
}

fn cmd_plot(ctx: &Ctx, a: &PlotArgs) -> Result<()> {
    let kind: PlotKind = a.kind.parse()?;
    let text = std::fs::read_to_string(&a.report)
        .with_context(|| format!("reading {}", a.report.display()))?;
    let report = ipc_core::CapacityReport::from_json(&text)?;
    let opts = PlotOptions {
        color_min: a.color_min,
        color_max: a.color_max,
        degree_cap: a.degree_cap,
    };
    let svg = render(&report, kind, &opts)?;
    let p = ctx.write(&a.out, &svg)?;
    log::info!("plot written to {}", p.display());
    Ok(())
}

fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without parallel support; --threads {n} is ignored");
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ipc_core::Error>() {
            return match e.kind() {
                ErrorKind::Parse => 2,
                ErrorKind::Precondition => 3,
                ErrorKind::Numerical => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    configure_threads(cli.threads);
    let ctx = Ctx {
        out_dir: cli.out_dir,
    };
    let res = match &cli.command {
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Validate(a) => cmd_validate(&ctx, a),
        Command::FactorDim(a) => cmd_factor(&ctx, a),
        Command::Benchmark(a) => cmd_benchmark(&ctx, a),
        Command::Plot(a) => cmd_plot(&ctx, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
