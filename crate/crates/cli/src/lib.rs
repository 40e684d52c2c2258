//! Command-line front end for `borrowoc`.
//!
//! Every subcommand reads one scenario config, runs the corresponding
//! computation and writes `<out>/<subcommand>.csv` together with a JSON
//! summary `<out>/<subcommand>.json`. Each CSV starts with a provenance
//! comment carrying the tool version, config hash and seed.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use borrowoc::borrow::{BorrowingMethod, ExternalDraw};
use borrowoc::oc_onearm::{
    oc_random_external_fixed_pp, oc_random_external_mc, simulate_random_external, summarize_draws,
    InnerEngine, McOcPoint,
};
use borrowoc::oc_twoarm::{
    oc_random_external_two_arm, oc_random_external_two_arm_mc, power_profile, OCProfile,
};
use borrowoc::region::{interval_count, rejection_region};
use borrowoc::runner::{
    run_algorithm1, run_algorithm2, run_grid, RunOptions, RunReport, DEFAULT_NSIM_ALGORITHM1,
    DEFAULT_NSIM_ALGORITHM2,
};
use borrowoc::statmath::DEFAULT_QUAD_TOL;
use clap::{Parser, ValueEnum};
use serde_json::json;

use config::{parse_config, ConfigError, ScenarioConfig};
use output::{format_float, write_atomic, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default two-arm profile offsets when the config has no grid.
pub const DEFAULT_OFFSETS: (f64, f64, f64) = (-3.0, 3.0, 0.1);
/// Default external draws for the Monte Carlo two-arm random mode.
pub const DEFAULT_NSIM_TWO_ARM_AUDIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Operating characteristics for one fixed external mean (`dE_mean`).
    OneArmFixed,
    /// Operating characteristics over a grid of external means.
    OneArmGrid,
    /// Random external data with true mean `thetaE`.
    OneArmRandom,
    /// Two-arm null and power profiles over offsets at `dE_mean`.
    TwoArmProfile,
    /// Two-arm profiles with random external data.
    TwoArmRandom,
    /// Replicates with one external data set each, calibrated per replicate.
    Algorithm1,
    /// Replicates averaged over random external data, calibrated once.
    Algorithm2,
    /// Rejection regions in sample-mean space.
    Region,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "borrowoc", version, about = "Operating characteristics of power-prior borrowing tests")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario config (JSON object).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicates; overrides the config.
    #[arg(long)]
    pub nsim: Option<usize>,
    /// Replace exact inner computations by literal Monte Carlo.
    #[arg(long)]
    pub mc_audit: bool,
    /// Outer quadrature tolerance for two-arm random external data.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Compute(#[from] borrowoc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Compute(e) if e.is_numeric() => 4,
            CliError::Compute(_) => 5,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files written by one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

/// Parse arguments, run, and map the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(w) => {
            println!("{}", w.csv.display());
            println!("{}", w.summary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("borrowoc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Load the config, apply command-line overrides and run the command.
pub fn run(cli: &Cli) -> Result<Written, CliError> {
    let text = std::fs::read_to_string(&cli.config).map_err(io_err(&cli.config))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(nsim) = cli.nsim {
        cfg.nsim = Some(nsim);
    }
    cfg.validate()?;
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(ConfigError(format!("--tol must be positive, got {tol}")).into());
        }
    }
    let result = execute(cli.command, &cfg, cli.mc_audit, cli.tol)?;
    write_outputs(cli.command, &cfg, &cli.out, &result)
}

/// Output of one command before serialization.
#[derive(Debug, Clone)]
pub struct CommandResult {
    pub table: Table,
    pub summary: serde_json::Value,
    pub nsim: Option<usize>,
}

fn options(audit: bool) -> RunOptions {
    if audit {
        RunOptions::audit()
    } else {
        RunOptions::default()
    }
}

/// Run `command` for an already-validated config.
pub fn execute(
    command: Command,
    cfg: &ScenarioConfig,
    mc_audit: bool,
    tol: Option<f64>,
) -> Result<CommandResult, CliError> {
    let method = cfg.method();
    match command {
        Command::OneArmFixed => {
            let de = cfg.require_de_mean()?;
            Ok(report_result(run_grid(&cfg.design()?, &[de], method)?, None))
        }
        Command::OneArmGrid | Command::Region if cfg.grid.is_none() && cfg.de_mean.is_none() => {
            Err(ConfigError(format!("{} needs key `grid` or `dE_mean`", command.name())).into())
        }
        Command::OneArmGrid => {
            cfg.one_arm()?;
            let grid = external_grid(cfg)?;
            Ok(report_result(run_grid(&cfg.design()?, &grid, method)?, None))
        }
        Command::OneArmRandom => one_arm_random(cfg, method, mc_audit),
        Command::TwoArmProfile => {
            let d = cfg.two_arm()?;
            let offsets = offsets(cfg)?;
            let p = power_profile(&d.scenario, d.external_mean, method, &offsets)?;
            Ok(profile_result(&p, json!({ "dE_mean": d.external_mean }), None))
        }
        Command::TwoArmRandom => {
            let d = cfg.two_arm()?;
            let theta_e = cfg.require_theta_e()?;
            let offsets = offsets(cfg)?;
            if mc_audit {
                let nsim = cfg.nsim.unwrap_or(DEFAULT_NSIM_TWO_ARM_AUDIT);
                let p = oc_random_external_two_arm_mc(&d.scenario, theta_e, method, &offsets, nsim, cfg.seed())?;
                Ok(profile_result(&p, json!({ "thetaE": theta_e, "engine": "monte-carlo" }), Some(nsim)))
            } else {
                let tol = tol.unwrap_or(DEFAULT_QUAD_TOL);
                let p = oc_random_external_two_arm(&d.scenario, theta_e, method, &offsets, tol)?;
                Ok(profile_result(&p, json!({ "thetaE": theta_e, "engine": "quadrature", "tol": tol }), None))
            }
        }
        Command::Algorithm1 => {
            let nsim = cfg.nsim.unwrap_or(DEFAULT_NSIM_ALGORITHM1);
            let r = run_algorithm1(&cfg.design()?, cfg.require_theta_e()?, method, nsim, cfg.seed(), options(mc_audit))?;
            Ok(report_result(r, Some(nsim)))
        }
        Command::Algorithm2 => {
            let nsim = cfg.nsim.unwrap_or(DEFAULT_NSIM_ALGORITHM2);
            let r = run_algorithm2(&cfg.design()?, cfg.require_theta_e()?, method, nsim, cfg.seed(), options(mc_audit))?;
            Ok(report_result(r, Some(nsim)))
        }
        Command::Region => region_table(cfg, method),
    }
}

fn external_grid(cfg: &ScenarioConfig) -> Result<Vec<f64>, ConfigError> {
    match cfg.grid_values()? {
        Some(g) => Ok(g),
        None => Ok(vec![cfg.require_de_mean()?]),
    }
}

fn offsets(cfg: &ScenarioConfig) -> Result<Vec<f64>, ConfigError> {
    match cfg.grid_values()? {
        Some(g) => Ok(g),
        None => {
            let (start, stop, step) = DEFAULT_OFFSETS;
            config::GridSpec { start, stop, step }.values()
        }
    }
}

pub const RECORD_COLUMNS: [&str; 7] = [
    "replicate",
    "dE_mean",
    "offset",
    "t1e_borrow",
    "power_borrow",
    "power_calibrated",
    "power_diff",
];

fn report_result(report: RunReport, nsim: Option<usize>) -> CommandResult {
    let mut table = Table::new(&RECORD_COLUMNS);
    for r in &report.records {
        table.push(vec![
            r.replicate.to_string(),
            format_float(r.de_mean),
            r.offset.map(format_float).unwrap_or_default(),
            format_float(r.t1e_borrow),
            format_float(r.power_borrow),
            format_float(r.power_calibrated),
            format_float(r.power_diff),
        ]);
    }
    let summary = json!({
        "kind": report.kind,
        "thetaE": report.theta_e,
        "nsim": report.nsim,
        "options": report.options,
        "calibration_level": report.calibration_level,
        "argmax_offset": report.argmax_offset,
        "summary": report.summary,
    });
    CommandResult { table, summary, nsim }
}

pub const PROFILE_COLUMNS: [&str; 5] = ["offset", "t1e", "power_borrow", "power_calibrated", "power_diff"];

fn profile_result(p: &OCProfile, extra: serde_json::Value, nsim: Option<usize>) -> CommandResult {
    let mut table = Table::new(&PROFILE_COLUMNS);
    for i in 0..p.grid.len() {
        table.push(vec![
            format_float(p.grid[i]),
            format_float(p.t1e[i]),
            format_float(p.power_borrow[i]),
            format_float(p.power_calibrated),
            format_float(p.power_diff[i]),
        ]);
    }
    let summary = json!({
        "alpha_b_max": p.alpha_b_max,
        "argmax_offset": p.argmax_offset,
        "saturated": p.saturated,
        "power_calibrated": p.power_calibrated,
        "points": p.grid.len(),
        "input": extra,
    });
    CommandResult { table, summary, nsim }
}

fn one_arm_random(cfg: &ScenarioConfig, method: BorrowingMethod, audit: bool) -> Result<CommandResult, CliError> {
    let s = cfg.one_arm()?;
    let theta_e = cfg.require_theta_e()?;
    let (engine, mc, nsim): (&str, McOcPoint, Option<usize>) = match (method, audit) {
        (BorrowingMethod::FixedPowerPrior { delta }, false) if delta > 0.0 => {
            let point = oc_random_external_fixed_pp(&s, theta_e, delta);
            let exact = McOcPoint {
                point,
                t1e_se: 0.0,
                power_borrow_se: 0.0,
                nsim: 0,
            };
            ("closed-form", exact, None)
        }
        (_, false) => {
            let nsim = cfg.nsim.unwrap_or(DEFAULT_NSIM_ALGORITHM2);
            ("monte-carlo", oc_random_external_mc(&s, theta_e, method, nsim, cfg.seed())?, Some(nsim))
        }
        (_, true) => {
            let nsim = cfg.nsim.unwrap_or(DEFAULT_NSIM_ALGORITHM2);
            let draws = simulate_random_external(
                &s,
                theta_e,
                method,
                nsim,
                cfg.seed(),
                InnerEngine::Literal,
                ExternalDraw::Observations,
            )?;
            ("literal-monte-carlo", summarize_draws(&draws, &s)?, Some(nsim))
        }
    };
    let cols = ["thetaE", "t1e_borrow", "power_borrow", "power_calibrated", "power_diff", "t1e_se", "power_borrow_se"];
    let mut table = Table::new(&cols);
    let p = mc.point;
    table.push(vec![
        format_float(theta_e),
        format_float(p.t1e_borrow),
        format_float(p.power_borrow),
        format_float(p.power_calibrated),
        format_float(p.power_diff),
        format_float(mc.t1e_se),
        format_float(mc.power_borrow_se),
    ]);
    let summary = json!({ "engine": engine, "thetaE": theta_e, "point": p, "t1e_se": mc.t1e_se, "power_borrow_se": mc.power_borrow_se });
    Ok(CommandResult { table, summary, nsim })
}

fn region_table(cfg: &ScenarioConfig, method: BorrowingMethod) -> Result<CommandResult, CliError> {
    let s = cfg.one_arm()?;
    let grid = external_grid(cfg)?;
    let cols = ["dE_mean", "interval_count", "interval", "lo", "hi", "flag"];
    let mut table = Table::new(&cols);
    let mut counts = Vec::with_capacity(grid.len());
    for &de in &grid {
        let r = rejection_region(&s, de, method, s.c)?;
        let k = interval_count(&r);
        counts.push(k);
        let flag = match r.flag() {
            Some(f) => serde_json::to_value(f).expect("flag serializes").as_str().unwrap_or_default().to_string(),
            None => String::new(),
        };
        if k == 0 {
            table.push(vec![format_float(de), "0".into(), String::new(), String::new(), String::new(), flag.clone()]);
        }
        for (i, iv) in r.intervals().iter().enumerate() {
            table.push(vec![
                format_float(de),
                k.to_string(),
                i.to_string(),
                format_float(iv.lo()),
                format_float(iv.hi()),
                flag.clone(),
            ]);
        }
    }
    let summary = json!({
        "points": grid.len(),
        "max_interval_count": counts.iter().max(),
        "multi_interval_points": counts.iter().filter(|&&k| k > 1).count(),
    });
    Ok(CommandResult { table, summary, nsim: None })
}

/// Provenance comment for the outputs of one run.
pub fn provenance(command: Command, cfg: &ScenarioConfig, nsim: Option<usize>) -> String {
    let mut line = format!(
        "borrowoc {VERSION} command={} config_sha256={} seed={} method={}",
        command.name(),
        cfg.hash(),
        cfg.seed(),
        cfg.method().label()
    );
    if let Some(n) = nsim {
        line.push_str(&format!(" nsim={n}"));
    }
    line
}

fn write_outputs(command: Command, cfg: &ScenarioConfig, out: &Path, result: &CommandResult) -> Result<Written, CliError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let name = command.name();
    let csv_path = out.join(format!("{name}.csv"));
    let json_path = out.join(format!("{name}.json"));
    let prov = provenance(command, cfg, result.nsim);
    let csv = result.table.to_csv(&prov).map_err(io_err(&csv_path))?;
    let doc = json!({
        "provenance": prov,
        "tool": "borrowoc",
        "version": VERSION,
        "command": name,
        "config_sha256": cfg.hash(),
        "seed": cfg.seed(),
        "config": cfg,
        "result": result.summary,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    text.push('\n');
    write_atomic(&csv_path, &csv).map_err(io_err(&csv_path))?;
    write_atomic(&json_path, text.as_bytes()).map_err(io_err(&json_path))?;
    Ok(Written {
        csv: csv_path,
        summary: json_path,
    })
}
