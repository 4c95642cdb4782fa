use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eqchirp::asymptotics::{AsymptoticReport, CrossTermConvention};
use eqchirp::model::{signal_power_and_snr, synthesize};
use eqchirp::montecarlo::{run_sweep, run_timing, SweepConfig};
use eqchirp::optimize::DEFAULT_GRID_POINTS;
use eqchirp::{estimate, ChirpParams, EstimationResult, EstimatorOptions, InitBox, Inits, Method, NoiseModel, Signal};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "eqchirp", version, about = "Equal-chirp-rate signal estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a signal and write it as an `n,y` CSV.
    Synth(SynthArgs),
    /// Estimate the parameters of a signal CSV.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo MSE sweep from a JSON config.
    Sweep(SweepArgs),
    /// Print asymptotic variances for a parameter set.
    Avar(AvarArgs),
    /// Compare estimator run times from a JSON config.
    Timing(TimingArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Parameter JSON, inline or a file path.
    #[arg(long)]
    params: String,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Noise model JSON, inline or a file path. Omit for a noiseless signal.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Signal CSV with header `n,y`.
    #[arg(long)]
    signal: PathBuf,
    /// Number of components.
    #[arg(long)]
    p: usize,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Explicit starting points as JSON `[[alpha, beta], ...]`, one per component.
    #[arg(long, conflicts_with = "grid")]
    init: Option<String>,
    /// Search boxes as JSON `[{"alpha": [lo, hi], "beta": [lo, hi]}, ...]`,
    /// one per component in extraction order.
    #[arg(long)]
    grid: Option<String>,
    /// Grid points per axis for `--grid`.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// Estimator options JSON (optimizer settings and bounds), inline or a file path.
    #[arg(long)]
    config: Option<String>,
    /// Write the result JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: String,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Override the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AvarArgs {
    #[arg(long)]
    params: String,
    /// Noise model JSON; defaults to i.i.d. noise with unit sigma.
    #[arg(long)]
    noise: Option<String>,
    /// Sample size for the unscaled variances.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = CrossTermsArg::Verbatim)]
    cross_terms: CrossTermsArg,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lse,
    Combined,
    Plugin,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lse => Method::Lse,
            MethodArg::Combined => Method::Combined,
            MethodArg::Plugin => Method::Plugin,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CrossTermsArg {
    Verbatim,
    DividedByLeadingPower,
}

impl From<CrossTermsArg> for CrossTermConvention {
    fn from(c: CrossTermsArg) -> Self {
        match c {
            CrossTermsArg::Verbatim => CrossTermConvention::Verbatim,
            CrossTermsArg::DividedByLeadingPower => CrossTermConvention::DividedByLeadingPower,
        }
    }
}

enum CliError {
    Usage(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<eqchirp::Error> for CliError {
    fn from(e: eqchirp::Error) -> Self {
        use eqchirp::Error as E;
        match e {
            E::DegenerateDesign { .. } | E::BadStart | E::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `source` as inline JSON when it starts like JSON, otherwise reads
/// it as a file. Errors name the offending field path.
fn load_json<T: DeserializeOwned>(what: &str, source: &str) -> CliResult<T> {
    let trimmed = source.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        source.to_string()
    } else {
        fs::read_to_string(source).map_err(|e| CliError::Usage(format!("{what}: cannot read {source}: {e}")))?
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("{what}: invalid JSON at `{path}`: {}", e.inner()))
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn flush(mut w: BufWriter<File>) -> CliResult<()> {
    w.flush()?;
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let params: ChirpParams = load_json("--params", &args.params)?;
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let noise = args.noise.as_deref().map(|s| load_json::<NoiseModel>("--noise", s)).transpose()?;
    let samples = match &noise {
        Some(model) => Some(model.generate(args.n, args.seed)?),
        None => None,
    };
    let signal = synthesize(&params, args.n, samples.as_deref())?;
    let mut out = create(&args.out)?;
    signal.write_csv(&mut out)?;
    flush(out)?;
    match &noise {
        Some(model) => {
            let (power, snr) = signal_power_and_snr(&params, model.sigma())?;
            println!("wrote {} samples to {}; signal power {power:.6}, SNR {snr:.3} dB", args.n, args.out.display());
        }
        None => {
            let power = eqchirp::model::signal_power(&params);
            println!("wrote {} samples to {}; signal power {power:.6}, noiseless", args.n, args.out.display());
        }
    }
    Ok(())
}

fn read_signal(path: &Path) -> CliResult<Signal> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Signal::read_csv(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_result(out: &mut dyn Write, result: &EstimationResult) -> io::Result<()> {
    writeln!(out, "method {}  beta {:.10}  converged {}", result.method, result.beta, result.converged())?;
    writeln!(out, "{:>4} {:>14} {:>14} {:>14} {:>14}", "k", "A", "B", "alpha", "beta_k")?;
    for (k, c) in result.components.iter().enumerate() {
        writeln!(out, "{:>4} {:>14.8} {:>14.8} {:>14.10} {:>14.10}", k + 1, c.a, c.b, c.alpha, c.beta)?;
    }
    writeln!(out, "residual sum of squares {:.6e}", result.diagnostics.total_rss)
}

fn estimate_cmd(args: EstimateArgs) -> CliResult<()> {
    let signal = read_signal(&args.signal)?;
    let opts: EstimatorOptions = match &args.config {
        Some(s) => load_json("--config", s)?,
        None => EstimatorOptions::default(),
    };
    let inits = match (&args.init, &args.grid) {
        (Some(s), _) => Inits::new(load_json::<Vec<(f64, f64)>>("--init", s)?)?,
        (None, Some(s)) => {
            let boxes: Vec<InitBox> = load_json("--grid", s)?;
            Inits::from_boxes(&signal, &boxes, args.grid_points, &opts.bounds)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "estimate needs starting values: pass --init with explicit pairs or --grid with search boxes".into(),
            ))
        }
    };
    if inits.len() != args.p {
        return Err(CliError::Usage(format!("--p is {} but {} starting points were given", args.p, inits.len())));
    }
    let result = estimate(args.method.into(), &signal, &inits, &opts)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::Usage(e.to_string()))?;
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            writeln!(out, "{json}")?;
            flush(out)?;
            print_result(&mut io::stdout(), &result)?;
        }
        None => {
            print_result(&mut io::stderr(), &result)?;
            println!("{json}");
        }
    }
    Ok(())
}

fn load_config(source: &str, seed: Option<u64>) -> CliResult<SweepConfig> {
    let mut config: SweepConfig = load_json("--config", source)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    let config = load_config(&args.config, args.seed)?;
    let report = run_sweep(&config)?;
    let (csv_path, json_path) = (with_extension(&args.out, "csv"), with_extension(&args.out, "json"));
    let mut csv = create(&csv_path)?;
    report.write_csv(&mut csv)?;
    flush(csv)?;
    let mut json = create(&json_path)?;
    writeln!(json, "{}", report.to_json()?)?;
    flush(json)?;
    let nonconverged: usize = report.rows.iter().filter(|r| r.parameter == "beta").map(|r| r.n_nonconverged).sum();
    println!(
        "{} rows over {} grid points, {} replications each; {nonconverged} non-converged fits; wrote {} and {}",
        report.rows.len(),
        report.grid.len(),
        report.replications,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn avar(args: AvarArgs) -> CliResult<()> {
    let params: ChirpParams = load_json("--params", &args.params)?;
    let noise = match &args.noise {
        Some(s) => load_json("--noise", s)?,
        None => NoiseModel::Iid { sigma: 1.0 },
    };
    noise.validate()?;
    let sigma = noise.sigma();
    let report = AsymptoticReport::new(&params, noise.long_run_constant(), sigma * sigma, args.n, args.cross_terms.into())?;
    println!("c = {:.6}, sigma^2 = {:.6}", report.c, report.sigma2);
    println!("{:<10} {:<10} {:>18} {:>18}", "method", "parameter", "scaled", "unscaled");
    for e in &report.entries {
        let unscaled = e.unscaled_variance_at_n.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        println!("{:<10} {:<10} {:>18.6} {:>18}", e.method.as_str(), e.parameter, e.scaled_variance, unscaled);
    }
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        report.write_csv(&mut out)?;
        flush(out)?;
    }
    Ok(())
}

fn timing(args: TimingArgs) -> CliResult<()> {
    let config = load_config(&args.config, args.seed)?;
    let report = run_timing(&config)?;
    println!("{:>10} {:<10} {:>14} {:>16}", "axis", "method", "mean_seconds", "ratio_to_plugin");
    for r in &report.rows {
        println!("{:>10} {:<10} {:>14.6} {:>16.3}", r.axis_value, r.method.as_str(), r.mean_seconds, r.ratio_to_plugin);
    }
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        report.write_csv(&mut out)?;
        flush(out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Avar(a) => avar(a),
        Command::Timing(a) => timing(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Numerical(_) => 3,
            })
        }
    }
}
