//! `doqkd`: finite-key secure-key capacity of DO-QKD from the command line.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 no secure key,
//! 4 validation failure.

mod report;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use doqkd::config::{parse_grid_spec, parse_lengths, parse_n_list, ConfigError, RunConfig};
use doqkd::csv::{sweep_distance_row, sweep_n_row, SWEEP_DISTANCE_HEADER, SWEEP_N_HEADER};
use doqkd::mc::{run_validation, ValidationPlan};
use doqkd::optimizer::{optimize_point, sweep_distance, sweep_n, Coincidences};

#[derive(Debug, Parser)]
#[command(
    name = "doqkd",
    version,
    about = "Finite-key secure-key capacity of DO-QKD"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write CSV here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Monte Carlo seed, overriding `mc.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[arg(long, global = true, value_parser = ["literal", "centered"])]
    bound_form: Option<String>,

    #[arg(long, global = true, value_parser = ["eq2", "strict"])]
    accounting: Option<String>,

    /// Force p = 1/2.
    #[arg(long, global = true)]
    symmetric: bool,

    /// Scales the statistical margin of the correlation-time bound in mc-validate.
    #[arg(long, global = true, hide = true, allow_hyphen_values = true)]
    margin_scale: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimise a single operating point.
    Rate {
        /// Coincidence count, e.g. `1e12` or `inf` (default: `sweep.n`).
        n: Option<String>,
    },
    /// Optimised rate over a log-spaced grid of coincidence counts.
    SweepN {
        /// `min:max:points`, log-spaced (default: `sweep.n_grid`).
        #[arg(long)]
        grid: Option<String>,
    },
    /// Optimised rate against channel length for several coincidence counts.
    SweepDistance {
        /// Comma list or `min:max:points`, in km (default: `sweep.lengths`).
        #[arg(long)]
        lengths: Option<String>,
        /// Comma list of counts; `inf` allowed (default: `sweep.n_list`).
        #[arg(long = "n-list")]
        n_list: Option<String>,
    },
    /// Monte Carlo check of the correlation-time bound and the Shannon model.
    McValidate,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    NoKey,
    Validation,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NoKey => 3,
            Failure::Validation => 4,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<doqkd::Error> for Failure {
    fn from(e: doqkd::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn flag_error(flag: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{flag}: {e}"))
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| flag_error(&path.display().to_string(), e))?;
            RunConfig::parse(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(form) = &cli.bound_form {
        cfg.set("bound_form", form)
            .map_err(|e| flag_error("--bound-form", e))?;
    }
    if let Some(acct) = &cli.accounting {
        cfg.set("accounting_mode", acct)
            .map_err(|e| flag_error("--accounting", e))?;
    }
    if cli.symmetric {
        cfg.symmetric = true;
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(scale) = cli.margin_scale {
        if !scale.is_finite() {
            return Err(flag_error("--margin-scale", "must be finite"));
        }
        cfg.mc.margin_scale = scale;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The single sink for CSV output.
fn open_output(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    match &cli.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| flag_error(&path.display().to_string(), e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn write_lines(out: &mut dyn Write, header: &str, rows: &[String]) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::Config(format!("writing output: {e}"));
    writeln!(out, "{header}").map_err(io_err)?;
    for r in rows {
        writeln!(out, "{r}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn cmd_rate(cli: &Cli, cfg: &RunConfig, n: Option<&str>) -> Result<(), Failure> {
    let n = match n {
        Some(s) => {
            let mut v = parse_n_list(s).map_err(|e| flag_error("N", e))?;
            if v.len() != 1 {
                return Err(flag_error("N", "expected a single count"));
            }
            v.remove(0)
        }
        None => cfg.n,
    };
    let mut out = cli.out.as_ref().map(|_| open_output(cli)).transpose()?;
    let ctx = cfg.context(cfg.d)?;
    let point = optimize_point(n, &ctx)?;
    report::check_point(&point)?;
    print!("{}", report::describe(cfg.d, &point));
    if let Some(out) = out.as_mut() {
        write_lines(out.as_mut(), SWEEP_N_HEADER, &[sweep_n_row(cfg.d, &point)])?;
    }
    if point.has_key() {
        Ok(())
    } else {
        Err(Failure::NoKey)
    }
}

fn cmd_sweep_n(cli: &Cli, cfg: &RunConfig, grid: Option<&str>) -> Result<(), Failure> {
    let grid = match grid {
        Some(spec) => parse_grid_spec(spec).map_err(|e| flag_error("--grid", e))?,
        None => cfg.n_grid.clone(),
    };
    let grid: Vec<Coincidences> = grid.into_iter().map(Coincidences::Finite).collect();
    let mut out = open_output(cli)?;
    let mut rows = Vec::new();
    for d in cfg.dimensions() {
        let ctx = cfg.context(d)?;
        for point in sweep_n(&ctx, &grid)? {
            report::check_point(&point)?;
            rows.push(sweep_n_row(d, &point));
        }
    }
    write_lines(out.as_mut(), SWEEP_N_HEADER, &rows)
}

fn cmd_sweep_distance(
    cli: &Cli,
    cfg: &RunConfig,
    lengths: Option<&str>,
    n_list: Option<&str>,
) -> Result<(), Failure> {
    let lengths = match lengths {
        Some(s) => parse_lengths(s).map_err(|e| flag_error("--lengths", e))?,
        None => cfg.lengths.clone(),
    };
    let n_list = match n_list {
        Some(s) => parse_n_list(s).map_err(|e| flag_error("--n-list", e))?,
        None => cfg.n_list.clone(),
    };
    let mut out = open_output(cli)?;
    let mut rows = Vec::new();
    for d in cfg.dimensions() {
        let ctx = cfg.context(d)?;
        for cell in sweep_distance(&ctx, &n_list, &lengths)? {
            report::check_point(&cell.point)?;
            rows.push(sweep_distance_row(d, &cell));
        }
    }
    write_lines(out.as_mut(), SWEEP_DISTANCE_HEADER, &rows)
}

fn cmd_mc_validate(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    let mc = &cfg.mc;
    let plan = ValidationPlan {
        seed: mc.seed,
        trials: mc.trials,
        m_values: mc.m_values.clone(),
        eps_pe_values: mc.eps_pe_values.clone(),
        true_xi: mc.true_xi,
        form: cfg.bound_form,
        margin_scale: mc.margin_scale,
        source: cfg.context(cfg.d)?.source,
        mi_draws: mc.mi_draws,
        mi_samples: mc.mi_samples,
        mi_tolerance: mc.mi_tolerance,
        mi_bin_width: mc.mi_bin_width,
    };
    let mut out = open_output(cli)?;
    let result = run_validation(&plan)?;
    write_lines(
        out.as_mut(),
        report::VALIDATION_HEADER,
        &report::validation_rows(&result),
    )?;
    let summary = report::validation_summary(&result);
    if cli.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    if result.pass() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(flag_error("--threads", "need at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| flag_error("--threads", e))?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Rate { n } => cmd_rate(cli, &cfg, n.as_deref()),
        Command::SweepN { grid } => cmd_sweep_n(cli, &cfg, grid.as_deref()),
        Command::SweepDistance { lengths, n_list } => {
            cmd_sweep_distance(cli, &cfg, lengths.as_deref(), n_list.as_deref())
        }
        Command::McValidate => cmd_mc_validate(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::NoKey => eprintln!("no secure key at this operating point"),
                Failure::Validation => eprintln!("validation failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
