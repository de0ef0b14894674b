//! `mdensity`: density construction, sampling, experiments and self-test.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error,
//! 3 numerical-certificate failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdensity::approximant::{ApproximantConfig, Variant};
use mdensity::density::io::{write_characteristic, write_density, write_density_csv};
use mdensity::density::{
    characteristic_grid, decay_diagnostic, invert_to_density_with, GridConfig, Rect,
    DEFAULT_BOUNDARY_THRESHOLD,
};
use mdensity::empirical::{sample_random_model, sample_t_line, Histogram2D, SampleCloud};
use mdensity::experiments::{
    json_digest, run_discrepancy, run_mean_value, run_selftest, sha256_hex, ExperimentConfig,
    ExperimentReport, Fault, SelftestOptions, SCHEMA_VERSION,
};
use mdensity::{Error, LFunctionSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OUT_ENV: &str = "MDENSITY_OUT";

#[derive(Parser, Debug)]
#[command(name = "mdensity", version, about = "Value-distribution densities of logarithmic derivatives of L-functions")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $MDENSITY_OUT, then the config's output_dir, then ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Characteristic-function grid, inverted density, and a summary.
    Density(DensityArgs),
    /// Sample cloud and histogram from the t-line or the random model.
    Empirical(EmpiricalArgs),
    /// Mean-value and discrepancy experiments from a JSON config.
    Compare(CompareArgs),
    /// Cross-module oracle suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lfunction: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long)]
    pmax: Option<u64>,
    /// Lattice points per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    zmax: Option<f64>,
    /// Fail unless the prime-tail certificate is below this.
    #[arg(long)]
    tail_tol: Option<f64>,
    /// Start of the decay fit along the real axis.
    #[arg(long)]
    kfit: Option<f64>,
}

/// File form of the density options; flags take precedence.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityFile {
    lfunction: Option<String>,
    sigma: Option<f64>,
    pmax: Option<u64>,
    grid: Option<usize>,
    zmax: Option<f64>,
    tail_tol: Option<f64>,
    kfit: Option<f64>,
    output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct DensityResolved {
    lfunction: String,
    grid: GridConfig,
    kfit: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SourceArg {
    RandomModel,
    TLine,
}

#[derive(Args, Debug)]
struct EmpiricalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long)]
    lfunction: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Approximant length parameter; primes up to X^2 enter.
    #[arg(long)]
    x: Option<f64>,
    /// Random-model sample count.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time horizon of the t-line.
    #[arg(long = "T")]
    t: Option<f64>,
    /// t-line sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Histogram bins per axis.
    #[arg(long)]
    bins: Option<usize>,
    /// Histogram half-width.
    #[arg(long)]
    range: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalFile {
    source: Option<SourceArg>,
    lfunction: Option<String>,
    sigma: Option<f64>,
    x: Option<f64>,
    count: Option<usize>,
    seed: Option<u64>,
    t: Option<f64>,
    samples: Option<usize>,
    bins: Option<usize>,
    range: Option<f64>,
    output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct EmpiricalResolved {
    source: SourceArg,
    lfunction: String,
    sigma: f64,
    x: f64,
    count: usize,
    seed: u64,
    t: f64,
    samples: usize,
    bins: usize,
    range: f64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the discrepancy T ladder, e.g. `1e3,1e4,1e5`.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FaultArg {
    NegateDensity,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Reduced sizes.
    #[arg(long)]
    quick: bool,
    /// Corrupts one stage on purpose; the suite must then fail.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ExpansionInapplicable { .. }
            | Error::QuadratureTooCoarse { .. }
            | Error::TailTooLarge { .. }
            | Error::BoundaryDecay { .. } => 3,
            _ => 2,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 2, msg: format!("i/o error: {e}") }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Ctx {
    out: Option<PathBuf>,
    verbose: u8,
}

impl Ctx {
    fn log(&self, msg: &str) {
        if self.verbose > 0 {
            eprintln!("{msg}");
        }
    }

    fn out_dir(&self, from_config: Option<&str>) -> CliResult<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| from_config.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::usage(format!(
            "config {}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn hex_to_bytes(hex: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap_or(0);
    }
    out
}

fn cmd_density(ctx: &Ctx, args: DensityArgs) -> CliResult<u8> {
    let file: DensityFile = match &args.config {
        Some(p) => read_config(p)?,
        None => DensityFile::default(),
    };
    let lfunction = args
        .lfunction
        .or(file.lfunction)
        .ok_or_else(|| Failure::usage("--lfunction is required"))?;
    let sigma = args.sigma.or(file.sigma).ok_or_else(|| Failure::usage("--sigma is required"))?;
    let mut grid = GridConfig::new(
        sigma,
        args.zmax.or(file.zmax).unwrap_or(40.0),
        args.grid.or(file.grid).unwrap_or(512),
        args.pmax.or(file.pmax).unwrap_or(10_000),
    );
    grid.tail_tol = args.tail_tol.or(file.tail_tol);
    let resolved = DensityResolved {
        lfunction,
        grid,
        kfit: args.kfit.or(file.kfit).unwrap_or(5.0),
    };
    let spec = LFunctionSpec::from_name(&resolved.lfunction)?;
    resolved.grid.validate()?;
    let digest = json_digest(&resolved);
    let out = ctx.out_dir(file.output_dir.as_deref())?;

    ctx.log(&format!("characteristic grid {} x {} ...", resolved.grid.n, resolved.grid.n));
    let cgrid = characteristic_grid(&spec, &resolved.grid)?;
    ctx.log("inverting ...");
    let density = invert_to_density_with(&cgrid, DEFAULT_BOUNDARY_THRESHOLD)?;
    let fit = decay_diagnostic(&cgrid, resolved.kfit);

    let bytes = hex_to_bytes(&digest);
    write_characteristic(&mut create(&out.join("characteristic.bin"))?, &cgrid, Some(bytes))?;
    write_density(&mut create(&out.join("density.bin"))?, &density, Some(bytes))?;
    write_density_csv(&mut create(&out.join("density.csv"))?, &density, Some(&digest))?;

    let d = &density.diagnostics;
    let summary = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": resolved,
        "config_digest": digest,
        "mass": d.mass,
        "eps_mass": d.eps_mass,
        "min_density": d.min_value,
        "max_density": d.max_value,
        "imag_residual": d.imag_residual,
        "boundary_max": d.boundary_max,
        "abs_error": cgrid.abs_error,
        "tail_cert": cgrid.tail_cert.is_finite().then_some(cgrid.tail_cert),
        "grid_diagnostics": cgrid.diagnostics,
        "decay_fit": fit.as_ref().ok(),
        "decay_fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    write_json(&out.join("density_summary.json"), &summary)?;
    println!(
        "mass = {:.12}  min = {:.3e}  abs_error = {:.3e}  files in {}",
        d.mass,
        d.min_value,
        cgrid.abs_error,
        out.display()
    );
    Ok(0)
}

fn cloud_digest(cloud: &SampleCloud) -> String {
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        bytes.extend_from_slice(&p.re.to_le_bytes());
        bytes.extend_from_slice(&p.im.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn cmd_empirical(ctx: &Ctx, args: EmpiricalArgs) -> CliResult<u8> {
    let file: EmpiricalFile = match &args.config {
        Some(p) => read_config(p)?,
        None => EmpiricalFile::default(),
    };
    let resolved = EmpiricalResolved {
        source: args.source.or(file.source).unwrap_or(SourceArg::RandomModel),
        lfunction: args
            .lfunction
            .or(file.lfunction)
            .ok_or_else(|| Failure::usage("--lfunction is required"))?,
        sigma: args.sigma.or(file.sigma).ok_or_else(|| Failure::usage("--sigma is required"))?,
        x: args.x.or(file.x).unwrap_or(100.0),
        count: args.count.or(file.count).unwrap_or(1_000_000),
        seed: args.seed.or(file.seed).unwrap_or(0),
        t: args.t.or(file.t).unwrap_or(1e5),
        samples: args.samples.or(file.samples).unwrap_or(200_000),
        bins: args.bins.or(file.bins).unwrap_or(64),
        range: args.range.or(file.range).unwrap_or(4.0),
    };
    let spec = LFunctionSpec::from_name(&resolved.lfunction)?;
    let digest = json_digest(&resolved);
    let out = ctx.out_dir(file.output_dir.as_deref())?;
    ctx.log("sampling ...");
    let cloud = match resolved.source {
        SourceArg::RandomModel => {
            sample_random_model(&spec, resolved.sigma, resolved.x, resolved.count, resolved.seed)?
        }
        SourceArg::TLine => sample_t_line(
            &spec,
            &ApproximantConfig::new(resolved.x, Variant::F, resolved.sigma),
            resolved.t,
            resolved.samples,
        )?,
    };
    let r = resolved.range;
    let hist = Histogram2D::new(&cloud, &Rect::new(-r, r, -r, r), resolved.bins, resolved.bins)?;
    cloud.write_csv(&mut create(&out.join("cloud.csv"))?, Some(&digest))?;
    hist.write_csv(&mut create(&out.join("histogram.csv"))?, Some(&digest))?;
    let points_digest = cloud_digest(&cloud);
    let summary = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": resolved,
        "config_digest": digest,
        "params": cloud.params,
        "cloud_digest": points_digest,
        "histogram_inside": hist.inside,
        "histogram_total": hist.total,
    });
    write_json(&out.join("empirical_summary.json"), &summary)?;
    println!("cloud_digest = {points_digest}  ({} points, files in {})", cloud.len(), out.display());
    Ok(0)
}

fn cmd_compare(ctx: &Ctx, args: CompareArgs) -> CliResult<u8> {
    let mut cfg: ExperimentConfig = read_config(&args.config)?;
    if let Some(ladder) = args.ladder {
        let d = cfg
            .discrepancy
            .as_mut()
            .ok_or_else(|| Failure::usage("--ladder needs a discrepancy section in the config"))?;
        d.ladder = ladder;
    }
    if let Some(seed) = args.seed {
        if let Some(m) = cfg.mean_value.as_mut() {
            m.seed = seed;
        }
    }
    if cfg.mean_value.is_none() && cfg.discrepancy.is_none() {
        return Err(Failure::usage("config has neither mean_value nor discrepancy"));
    }
    cfg.validate()?;
    let out = ctx.out_dir(cfg.output_dir.as_deref())?;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    if cfg.mean_value.is_some() {
        ctx.log("mean-value experiment ...");
        let r = run_mean_value(&cfg)?;
        fs::write(out.join("report_mean_value.json"), r.to_json() + "\n")?;
        if let Some(m) = &r.mean_value {
            println!(
                "mean value: lhs = {:.6}  rhs = {:.6}  parseval = {:.6}  |lhs-rhs| = {:.2e} (tol {:.2e})",
                m.lhs,
                m.rhs,
                m.parseval_rhs,
                m.difference.abs(),
                m.lhs_tolerance
            );
        }
        reports.push(r);
    }
    if cfg.discrepancy.is_some() {
        ctx.log("discrepancy experiment ...");
        let r = run_discrepancy(&cfg)?;
        fs::write(out.join("report_discrepancy.json"), r.to_json() + "\n")?;
        r.write_rectangles_csv(&mut create(&out.join("discrepancy_rectangles.csv"))?)?;
        r.write_ladder_csv(&mut create(&out.join("discrepancy_ladder.csv"))?)?;
        if let Some(d) = &r.discrepancy {
            for s in &d.ladder {
                println!("T = {:e}: max normalized discrepancy {:.4e}", s.t, s.max_normalized);
            }
        }
        reports.push(r);
    }
    let ok = reports.iter().all(|r| r.passed());
    if !ok {
        eprintln!("an oracle comparison exceeded its certificate");
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_selftest(ctx: &Ctx, args: SelftestArgs) -> CliResult<u8> {
    let opts = SelftestOptions {
        quick: args.quick,
        fault: args.inject_fault.map(|f| match f {
            FaultArg::NegateDensity => Fault::NegateDensity,
        }),
    };
    let report = run_selftest(&opts);
    for c in &report.checks {
        println!(
            "[{}] {}: measured {:.3e}, allowed {:.3e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.allowed,
            c.detail
        );
    }
    if ctx.out.is_some() || std::env::var_os(OUT_ENV).is_some() {
        let out = ctx.out_dir(None)?;
        write_json(&out.join("selftest.json"), &report)?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn run(cli: Cli) -> CliResult<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx {
        out: cli.out,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Density(a) => cmd_density(&ctx, a),
        Command::Empirical(a) => cmd_empirical(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Selftest(a) => cmd_selftest(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
