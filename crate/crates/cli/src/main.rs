mod render;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coxmic::data::{load_csv_with_recodes, RecodeRule};
use coxmic::fit::{fit_prepared, prepare, MicConfig, StartPolicy, DEFAULT_ZERO_TOL};
use coxmic::path::{path_flatness, scan_a, ScanOptions};
use coxmic::sim::{bench_grid, generate, table1_grid, write_bench_tsv, BenchMethod, SimSpec, BENCH_RUNS};
use coxmic::{Criterion, SurvivalDataset};

#[derive(Parser)]
#[command(name = "coxmic", version, about = "Sparse Cox regression by minimizing an approximated information criterion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and print the coefficient table.
    Fit(FitArgs),
    /// Fit across a grid of `a` values and write the coefficient path.
    Path(PathArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Time MIC against MPLE and stepwise BIC on simulated grids.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    /// Columns to ignore, comma separated.
    #[arg(long, value_delimiter = ',')]
    drop_cols: Vec<String>,
    /// Value recode applied before conversion, e.g. `status=2:1,*:0`. Repeatable.
    #[arg(long = "recode", value_name = "COL=FROM:TO,...")]
    recodes: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Mple,
    Ridge,
    Zero,
    User,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Bic,
    Aic,
    Custom,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "mple")]
    start: StartArg,
    /// Ridge penalty for `--start ridge`.
    #[arg(long, default_value_t = 1.0)]
    theta0: f64,
    /// File of starting values on the standardized scale, for `--start user`.
    #[arg(long, required_if_eq("start", "user"))]
    beta0: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bic")]
    criterion: CriterionArg,
    /// Penalty weight for `--criterion custom`.
    #[arg(long, required_if_eq("criterion", "custom"))]
    lambda0: Option<f64>,
    /// Sharpness of the tanh approximation (default: number of events).
    #[arg(long)]
    a0: Option<f64>,
    /// Use covariates as given instead of standardizing them.
    #[arg(long)]
    no_scale: bool,
    #[arg(long, default_value_t = 300)]
    maxit_global: usize,
    #[arg(long, default_value_t = 100)]
    maxit_local: usize,
    #[arg(long, default_value_t = coxmic::optim::DEFAULT_SEED)]
    seed: u64,
    /// Independent optimizer runs with seeds seed, seed+1, ...; the best is kept.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Coefficients with |beta| below this are set to exactly zero.
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    zero_tol: f64,
    #[arg(long, default_value_t = 0.95)]
    conf_level: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Tsv,
    Json,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputFormat,
    #[arg(long, default_value_t = 4)]
    round_digits: usize,
    /// Also print penalty, fit statistics and optimizer diagnostics.
    #[arg(long)]
    details: bool,
    /// Write error-bar data for gamma and beta as TSV to this path.
    #[arg(long, value_name = "PATH")]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// `lo:hi` (unit steps), `lo:hi:step`, or a comma-separated list.
    #[arg(long, default_value = "10:200")]
    a_grid: String,
    /// Start each grid point from the previous solution.
    #[arg(long)]
    warm_start: bool,
    /// Smallest `a` included in the flatness summary.
    #[arg(long, default_value_t = 50.0)]
    a_min: f64,
    /// Write the path TSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Comma-separated coefficients (default: 1, 1, then zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    true_beta: Vec<f64>,
    /// AR(1) correlation between adjacent covariates.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.25)]
    censoring: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchFormat {
    Tsv,
    Json,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON array of simulation specs (default: the 12-cell n x p x censoring grid).
    #[arg(long, value_name = "PATH")]
    grid: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mic,mple,stepwise")]
    methods: Vec<MethodArg>,
    /// Seed for the default grid.
    #[arg(long, default_value_t = coxmic::optim::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "tsv")]
    format: BenchFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mic,
    Mple,
    Stepwise,
}

impl From<MethodArg> for BenchMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mic => BenchMethod::Mic,
            MethodArg::Mple => BenchMethod::Mple,
            MethodArg::Stepwise => BenchMethod::Stepwise,
        }
    }
}

/// A failure tagged with the stage it happened in.
struct Failure {
    stage: &'static str,
    message: String,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage,
            message: e.to_string(),
        })
    }
}

fn fail(stage: &'static str, message: impl Into<String>) -> Failure {
    Failure {
        stage,
        message: message.into(),
    }
}

fn load(args: &DataArgs) -> Result<SurvivalDataset, Failure> {
    let recodes = args
        .recodes
        .iter()
        .map(|r| r.parse::<RecodeRule>())
        .collect::<Result<Vec<_>, _>>()
        .stage("load")?;
    load_csv_with_recodes(
        &args.input,
        &args.time_col,
        &args.status_col,
        &args.drop_cols,
        &recodes,
    )
    .stage("load")
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).stage("start")?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| fail("start", format!("`{s}` in {} is not a number", path.display())))
        })
        .collect()
}

fn mic_config(m: &ModelArgs) -> Result<MicConfig, Failure> {
    let criterion = match m.criterion {
        CriterionArg::Bic => Criterion::Bic,
        CriterionArg::Aic => Criterion::Aic,
        CriterionArg::Custom => Criterion::Custom(m.lambda0.expect("enforced by clap")),
    };
    if m.lambda0.is_some() && !matches!(m.criterion, CriterionArg::Custom) {
        return Err(fail("config", "--lambda0 requires --criterion custom"));
    }
    let start = match m.start {
        StartArg::Mple => StartPolicy::Mple,
        StartArg::Ridge => StartPolicy::Ridge(m.theta0),
        StartArg::Zero => StartPolicy::Zero,
        StartArg::User => StartPolicy::User(read_vector(m.beta0.as_deref().expect("enforced by clap"))?),
    };
    let mut cfg = MicConfig {
        criterion,
        a: m.a0,
        start,
        standardize: !m.no_scale,
        zero_tol: m.zero_tol,
        conf_level: m.conf_level,
        ..MicConfig::default()
    };
    cfg.optimizer.maxit_global = m.maxit_global;
    cfg.optimizer.maxit_local = m.maxit_local;
    cfg.optimizer.seed = m.seed;
    cfg.optimizer.restarts = m.restarts;
    cfg.optimizer.validate().stage("config")?;
    Ok(cfg)
}

fn output_sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).stage("output")?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let cfg = mic_config(&args.model)?;
    let ds = load(&args.data)?;
    let work = prepare(&ds, &cfg).stage("preprocess")?;
    let beta0 = cfg.start.starting_beta(&work, cfg.newton).stage("start")?;
    let result = fit_prepared(&work, beta0, &cfg).stage("estimate")?;

    let mut out = output_sink(None)?;
    match args.output {
        OutputFormat::Table => render::table(&result, args.round_digits, &mut out),
        OutputFormat::Tsv => render::tsv(&result, args.round_digits, &mut out),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &result)
                .map_err(io::Error::other)
                .and_then(|_| writeln!(out))
        }
    }
    .stage("output")?;
    if args.details {
        render::details(&result, &mut out).stage("output")?;
    }
    out.flush().stage("output")?;
    if let Some(path) = &args.emit_plot_data {
        let mut w = output_sink(Some(path))?;
        render::plot_data(&result, &mut w).stage("output")?;
        w.flush().stage("output")?;
    }
    if !result.converged() {
        let local = &result.report.local;
        return Err(fail(
            "estimate",
            format!(
                "local optimizer stopped without converging after {} iterations (gradient norm {:.3e})",
                local.iterations,
                local.grad_norm.unwrap_or(f64::NAN)
            ),
        ));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| fail("config", format!("bad a-grid value `{s}`")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let (lo, hi, step) = match parts.as_slice() {
            [lo, hi] => (num(lo)?, num(hi)?, 1.0),
            [lo, hi, step] => (num(lo)?, num(hi)?, num(step)?),
            _ => return Err(fail("config", format!("bad a-grid range `{spec}`"))),
        };
        if !(step > 0.0) || hi < lo {
            return Err(fail("config", format!("a-grid range `{spec}` is empty")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| lo + step * k as f64).collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

fn cmd_path(args: PathArgs) -> Result<(), Failure> {
    let cfg = mic_config(&args.model)?;
    let grid = parse_grid(&args.a_grid)?;
    let ds = load(&args.data)?;
    let opts = ScanOptions {
        warm_start: args.warm_start,
        parallel: true,
    };
    let path = scan_a(&ds, &grid, &cfg, opts).stage("scan")?;
    if path.reordered {
        eprintln!("note: a grid was not ascending; rows are written in ascending a");
    }
    let mut out = output_sink(args.out.as_deref())?;
    path.write_tsv(&mut out).stage("output")?;
    out.flush().stage("output")?;

    match path_flatness(&path, args.a_min) {
        Ok(f) => render::flatness(&f, &path.names, &mut io::stderr()).stage("output")?,
        Err(e) => eprintln!("note: no flatness summary: {e}"),
    }
    let failed: Vec<String> = path
        .a_grid
        .iter()
        .enumerate()
        .filter(|(k, _)| path.errors[*k].is_some() || !path.converged[*k])
        .map(|(_, a)| a.to_string())
        .collect();
    if !failed.is_empty() {
        return Err(fail(
            "scan",
            format!("{} grid point(s) failed or did not converge: a = {}", failed.len(), failed.join(", ")),
        ));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let true_beta = if args.true_beta.is_empty() {
        SimSpec::sparse(args.n, args.p, args.censoring, args.seed).true_beta
    } else {
        args.true_beta
    };
    let spec = SimSpec {
        n: args.n,
        p: args.p,
        true_beta,
        rho: args.rho,
        target_censoring: args.censoring,
        seed: args.seed,
    };
    let ds = generate(&spec).stage("simulate")?;
    let mut out = output_sink(args.out.as_deref())?;
    ds.write_csv(&mut out).stage("output")?;
    out.flush().stage("output")
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let grid: Vec<SimSpec> = match &args.grid {
        Some(path) => {
            let file = File::open(path).stage("config")?;
            serde_json::from_reader(io::BufReader::new(file)).stage("config")?
        }
        None => table1_grid(args.seed),
    };
    let methods: Vec<BenchMethod> = args.methods.iter().map(|&m| m.into()).collect();
    let rows = bench_grid(&grid, &methods, &MicConfig::default());

    let mut out = output_sink(None)?;
    let timing = format!(
        "wall-clock seconds around each method call, mean of {BENCH_RUNS} seeded runs, cells run serially"
    );
    match args.format {
        BenchFormat::Tsv => {
            writeln!(out, "# {timing}").stage("output")?;
            write_bench_tsv(&rows, &mut out).stage("output")?;
        }
        BenchFormat::Json => {
            let doc = serde_json::json!({ "timing": timing, "runs_per_cell": BENCH_RUNS, "rows": rows });
            serde_json::to_writer_pretty(&mut out, &doc).stage("output")?;
            writeln!(out).stage("output")?;
        }
    }
    out.flush().stage("output")?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(fail("bench", format!("{failed} cell(s) failed; see the error column")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Path(a) => cmd_path(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("coxmic: {} failed: {}", f.stage, f.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
