use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mixed_rabi::Family;
use mixed_rabi_cli::{
    configure_threads, run, CliError, CommandKind, Format, Grid, ModelChoice, ParamsConfig, RunConfig,
};

/// Spectrum, exceptional points, effective model and dynamics of the mixed
/// one- and two-photon quantum Rabi model (ω = 1).
///
/// Every run writes its data and a manifest.json into --output.
/// Set RABI_THREADS to cap parallelism.
#[derive(Debug, Parser)]
#[command(name = "mixed-rabi", version)]
struct Cli {
    #[arg(value_enum)]
    command: CommandKind,

    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    g1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    g2: f64,
    /// External bias ε.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    epsilon: f64,

    /// G-function series length (adaptive when omitted).
    #[arg(long)]
    n_max: Option<usize>,
    /// Starting Fock truncation for diagonalization.
    #[arg(long)]
    truncation: Option<usize>,
    /// Mantissa bits for multiple precision; 0 forces doubles.
    #[arg(long)]
    precision: Option<u32>,
    /// Energy step of G-curves and of the root search.
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    root_tol: f64,
    /// Energy window.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    /// Number of levels (or poles, for frame).
    #[arg(long)]
    levels: Option<usize>,
    /// Pole family of an exceptional search.
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    /// Pole index of an exceptional search.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "POINTS"], allow_negative_numbers = true)]
    g2_grid: Option<Vec<f64>>,
    /// Comma-separated g2 values.
    #[arg(long, value_delimiter = ',')]
    g2_list: Option<Vec<f64>>,
    /// Grid of g1_eff / g1c_eff.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "POINTS"], allow_negative_numbers = true)]
    ratio_grid: Option<Vec<f64>>,
    /// Grid of the external bias.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "POINTS"], allow_negative_numbers = true)]
    eps_grid: Option<Vec<f64>>,
    /// Axis grid shared by Re α and Im α.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "POINTS"], allow_negative_numbers = true)]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,

    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write a gnuplot script per CSV file.
    #[arg(long)]
    gnuplot_stub: bool,
    /// JSON RunConfig whose fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "A" | "a" => Ok(Family::A),
        "B" | "b" => Ok(Family::B),
        _ => Err(format!("family must be A or B, got {s:?}")),
    }
}

fn grid(v: Option<Vec<f64>>, what: &str) -> Result<Option<Grid>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some(&[lo, hi, n]) if n >= 1.0 && n.fract() == 0.0 => Ok(Some(Grid::new(lo, hi, n as usize))),
        Some(_) => Err(CliError::Config(format!("--{what} takes LO HI POINTS with integer POINTS"))),
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::new(
        cli.command,
        ParamsConfig {
            delta: cli.delta,
            g1: cli.g1,
            g2: cli.g2,
            epsilon: cli.epsilon,
        },
    );
    let n = &mut cfg.numeric;
    n.n_max = cli.n_max;
    n.truncation = cli.truncation;
    n.precision = cli.precision;
    n.resolution = cli.resolution;
    n.root_tol = cli.root_tol;
    n.window = cli.window.map(|w| [w[0], w[1]]);
    n.levels = cli.levels;
    n.family = cli.family;
    n.m = cli.m;
    n.g2_grid = grid(cli.g2_grid, "g2-grid")?;
    n.g2_list = cli.g2_list;
    n.ratio_grid = grid(cli.ratio_grid, "ratio-grid")?;
    n.eps_grid = grid(cli.eps_grid, "eps-grid")?;
    n.alpha_grid = grid(cli.alpha_grid, "alpha-grid")?;
    n.t_max = cli.t_max;
    n.t_step = cli.t_step;
    n.model = cli.model;
    cfg.output.dir = cli.output.unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    cfg.output.format = cli.format;
    cfg.output.gnuplot_stub = cli.gnuplot_stub;
    if let Some(path) = cli.config {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg = cfg.merged_with(&file)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .and_then(|_| build_config(cli))
        .and_then(|cfg| run(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, report)) => {
            // A closed pipe (e.g. `| head`) is not an error worth a panic.
            let mut out = std::io::stdout().lock();
            for line in &report.outcome.summary {
                if writeln!(out, "{line}").is_err() {
                    break;
                }
            }
            for w in &report.outcome.warnings {
                eprintln!("warning: {w}");
            }
            let files: Vec<String> = report.written.iter().map(|p| p.display().to_string()).collect();
            eprintln!("{}: wrote {}", cfg.command.name(), files.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
