//! `ellipfit`: generate synthetic ellipsoid data, fit it, and compare the
//! iterative fitter with the single-pass baseline.

mod compare;
mod io;
mod report;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ellipsoid_fit::batch::compare_sweep;
use ellipsoid_fit::{
    fit_ellipsoid, fit_single_pass, generate, AxisOrder, CenterModel, EulerAngles, FitConfig, InitMode,
    SynthSpec,
};

use compare::Method;
use io::{manifest_path, read_points, write_json, write_points, RunManifest};
use report::JsonReport;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_FIT_FAILED: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "ellipfit", version, about = "Fit ellipsoids to small point sets", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write points sampled on an ellipsoid surface as CSV
    Generate(GenerateArgs),
    /// Fit a points file with the iterative method
    Fit(FitArgs),
    /// Fit a points file with a single constrained pass
    Baseline(FitArgs),
    /// Seed sweep comparing both methods on synthetic data
    Compare(CompareArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// JSON synthetic spec; the flags below override its fields
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Semi-axes A,B,C
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<f64>>,
    /// Euler angles alpha,beta,gamma in degrees
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    angles: Option<Vec<f64>>,
    /// Number of points
    #[arg(short = 'n', long)]
    points: Option<usize>,
    /// Standard deviation of isotropic Gaussian noise
    #[arg(long)]
    noise: Option<f64>,
}

impl SpecArgs {
    fn resolve(&self, seed: Option<u64>) -> anyhow::Result<SynthSpec> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => SynthSpec::default(),
        };
        for (flag, v) in [("--axes", &self.axes), ("--angles", &self.angles)] {
            if v.as_ref().is_some_and(|v| v.len() != 3) {
                return Err(usage(format!("{flag} takes three comma-separated values")));
            }
        }
        if let Some(a) = &self.axes {
            spec.semi_axes = [a[0], a[1], a[2]];
        }
        if let Some(a) = &self.angles {
            spec.euler_deg = EulerAngles::new(a[0], a[1], a[2]);
        }
        if let Some(n) = self.points {
            spec.n_points = n;
        }
        if let Some(s) = self.noise {
            spec.noise_sigma = s;
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; a `.manifest.json` sidecar is written next to it
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Fisher,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum CenterArg {
    Origin,
    Free,
}

#[derive(Clone, Copy)]
struct OrderArg(AxisOrder);

impl std::str::FromStr for OrderArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "descending" => Ok(OrderArg(AxisOrder::Descending)),
            "ascending" => Ok(OrderArg(AxisOrder::Ascending)),
            _ => {
                let ranks: Vec<usize> = s
                    .split(',')
                    .map(|r| r.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| format!("'{s}' is not descending, ascending or three ranks like 0,2,1"))?;
                let mut check = ranks.clone();
                check.sort_unstable();
                if check != [0, 1, 2] {
                    return Err(format!("'{s}' must be a permutation of 0,1,2"));
                }
                Ok(OrderArg(AxisOrder::Ranked([ranks[0], ranks[1], ranks[2]])))
            }
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Seed for the random initial rotation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    init: InitArg,
    #[arg(long, default_value_t = 1e10)]
    k_max: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-8)]
    off_diag_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    trace_tol: f64,
    #[arg(long, value_enum, default_value = "origin")]
    center: CenterArg,
    /// Reported axis order: descending, ascending, or length ranks per slot (e.g. 2,1,0)
    #[arg(long, default_value = "descending")]
    axis_order: OrderArg,
}

impl ConfigArgs {
    fn config(&self) -> anyhow::Result<FitConfig> {
        let cfg = FitConfig {
            k_max: self.k_max,
            max_outer_iterations: self.max_outer,
            off_diag_tol: self.off_diag_tol,
            trace_tol: self.trace_tol,
            init_mode: match self.init {
                InitArg::Random => InitMode::Random,
                InitArg::Fisher => InitMode::Fisher,
                InitArg::Identity => InitMode::Identity,
            },
            rng_seed: self.seed,
            center_model: match self.center {
                CenterArg::Origin => CenterModel::Origin,
                CenterArg::Free => CenterModel::Free,
            },
            axis_order: self.axis_order.0,
            ..FitConfig::default()
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Points CSV with header x,y,z
    input: PathBuf,
    /// JSON report path; stdout when omitted
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Trial i uses base seed + i for data and initial rotation
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "iterative,single-pass")]
    methods: Vec<Method>,
    /// Per-trial CSV
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Aggregate CSV; always printed to stdout as well
    #[arg(long)]
    aggregate: Option<PathBuf>,
    /// Per-iteration CSV of one iterative trial
    #[arg(long)]
    emit_trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    trace_trial: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Bad flags or inconsistent parameters.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<u8> {
    let started = Instant::now();
    let spec = args.spec.resolve(args.seed)?;
    let points = generate(&spec).map_err(|e| usage(e.to_string()))?;
    write_points(&args.out, &points)?;
    let mut manifest = RunManifest::new(&spec, spec.seed);
    manifest.inputs.extend(args.spec.spec.clone());
    manifest.outputs.push(args.out.clone());
    manifest.finish(started);
    write_json(Some(&manifest_path(&args.out)), &manifest)?;
    write_json(None, &manifest)?;
    Ok(EXIT_OK)
}

fn cmd_fit(args: &FitArgs, method: Method) -> anyhow::Result<u8> {
    let started = Instant::now();
    let cfg = args.config.config()?;
    let points = read_points(&args.input)?;
    let result = match method {
        Method::Iterative => fit_ellipsoid(&points, &cfg),
        Method::SinglePass => fit_single_pass(&points, &cfg),
    };
    let mut manifest = RunManifest::new(&cfg, cfg.rng_seed);
    manifest.inputs.push(args.input.clone());
    manifest.outputs.extend(args.out.clone());
    manifest.finish(started);
    let (json, code) = match &result {
        Ok(r) => (JsonReport::from_fit(method.name(), r, &manifest), if r.converged { EXIT_OK } else { EXIT_FIT_FAILED }),
        Err(e) => {
            eprintln!("fit failed: {e}");
            (JsonReport::from_error(method.name(), e, &manifest), EXIT_FIT_FAILED)
        }
    };
    write_json(args.out.as_deref(), &json)?;
    Ok(code)
}

fn cmd_compare(args: &CompareArgs) -> anyhow::Result<u8> {
    let started = Instant::now();
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if args.emit_trace.is_some() && args.trace_trial >= args.trials {
        return Err(usage("--trace-trial must be below --trials"));
    }
    let spec = args.spec.resolve(None)?;
    let cfg = args.config.config()?;
    let trials = compare_sweep(&spec, &cfg, args.base_seed, args.trials);

    let mut outputs = Vec::new();
    if let Some(path) = &args.out {
        compare::write_trials(path, &trials, &args.methods)?;
        outputs.push(path.clone());
    }
    let summary = compare::aggregate(&trials, &args.methods)?;
    std::io::stdout().lock().write_all(summary.as_bytes()).context("cannot write to stdout")?;
    if let Some(path) = &args.aggregate {
        std::fs::write(path, &summary).with_context(|| format!("cannot write {}", path.display()))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &args.emit_trace {
        let seed = args.base_seed.wrapping_add(args.trace_trial as u64);
        compare::write_trace(path, &spec, &cfg, seed)?;
        outputs.push(path.clone());
    }

    let snapshot = serde_json::json!({ "spec": spec, "fit": cfg, "trials": args.trials, "methods": args.methods.iter().map(|m| m.name()).collect::<Vec<_>>() });
    let mut manifest = RunManifest::new(&snapshot, args.base_seed);
    manifest.inputs.extend(args.spec.spec.clone());
    manifest.outputs = outputs.clone();
    manifest.finish(started);
    for path in &outputs {
        write_json(Some(&manifest_path(path)), &manifest)?;
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a, Method::Iterative),
        Command::Baseline(a) => cmd_fit(a, Method::SinglePass),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_IO)
            }
        }
    }
}
