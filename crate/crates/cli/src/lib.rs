//! Config-driven runner for the `catfield` models.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid config or arguments,
//! 3 the requested preparation has zero norm, 4 a density, probability or
//! written row violated positivity, trace or the self-audit.

pub mod config;
pub mod engine;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use catfield::fit::{loglog_slope, logspace};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Command, EngineName, LoadedConfig, PhiValue};
use crate::engine::{series, time_grid, Engine, Scenario, TimeSeriesRow};
use crate::error::CliError;
use crate::output::{write_and_audit, AuditRules, Table};

/// Window (units of `t_c`) and sample count for the short-time slope fits.
pub const SHORT_TIME_WINDOW: (f64, f64) = (1e-3, 1e-2);
pub const SHORT_TIME_POINTS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "catfield", version, about = "Decoherence of cavity cat states: time series of correlation signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Evaluate one scenario on its time grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Microscopic and master-equation engines side by side, plus a summary.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One run per parameter value, rows tagged with the value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Phi,
    Alpha0Re,
    Gamma,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "phi" => Some(Self::Phi),
            "alpha0_re" => Some(Self::Alpha0Re),
            "gamma" => Some(Self::Gamma),
            _ => None,
        }
    }

    fn apply(self, cfg: &mut LoadedConfig, value: f64) {
        let c = &mut cfg.config;
        match self {
            SweepParam::Phi => c.phi = PhiValue::Direct(value),
            SweepParam::Alpha0Re => c.alpha0.re = value,
            SweepParam::Gamma => {
                if let Some(b) = c.bath.as_mut() {
                    b.gamma = value;
                }
                if let Some(m) = c.master.as_mut() {
                    m.gamma = value;
                }
            }
        }
    }
}

fn load(path: &Path, command: Command) -> Result<LoadedConfig, CliError> {
    let cfg = LoadedConfig::load(path)?;
    cfg.validate(command)?;
    Ok(cfg)
}

fn evaluate(cfg: &LoadedConfig, which: EngineName, times: &[f64]) -> Result<Vec<TimeSeriesRow>, CliError> {
    let engine = Engine::from_config(cfg, which)?;
    let scenario = Scenario::from_config(cfg)?;
    series(&engine, &scenario, times).map_err(|e| CliError::model(&cfg.path, e))
}

fn grid(cfg: &LoadedConfig) -> Vec<f64> {
    time_grid(cfg.config.time.t_max_over_tc, cfg.config.time.points)
}

fn warn_recurrence(rows: &[TimeSeriesRow]) {
    if let Some(r) = rows.iter().find(|r| r.recurrence_warning) {
        log::warn!("times from t = {} t_c exceed half the bath recurrence time", r.t);
    }
}

fn plain_rules() -> AuditRules {
    AuditRules { conserving: vec![String::new()], block_column: None }
}

/// `run`: returns the written file.
pub fn run(config: &Path, output: Option<&Path>) -> Result<PathBuf, CliError> {
    let cfg = load(config, Command::Run)?;
    let rows = evaluate(&cfg, cfg.config.engine, &grid(&cfg))?;
    warn_recurrence(&rows);
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_path());
    write_and_audit(&Table::from_rows(&rows), cfg.config.output.format, &path, &plain_rules())?;
    log::info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(path)
}

fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Location of the compare summary next to the joint table.
pub fn summary_path(output: &Path) -> PathBuf {
    output.with_extension("summary.json")
}

/// `compare`: returns the joint table and the summary file.
pub fn compare(config: &Path, output: Option<&Path>) -> Result<(PathBuf, PathBuf), CliError> {
    let cfg = load(config, Command::Compare)?;
    let times = grid(&cfg);
    let micro = evaluate(&cfg, EngineName::Microscopic, &times)?;
    let me = evaluate(&cfg, EngineName::Master, &times)?;
    warn_recurrence(&micro);

    let (lo, hi) = cfg.config.compare.map_or((0.0, cfg.config.time.t_max_over_tc), |c| (c.window[0], c.window[1]));
    let gaps: Vec<(f64, f64)> = micro.iter().zip(&me).map(|(a, b)| (a.t, (a.eta - b.eta).abs())).collect();
    let worst = |it: &mut dyn Iterator<Item = &(f64, f64)>| {
        it.fold(None, |acc: Option<(f64, f64)>, &(t, g)| match acc {
            Some((_, best)) if best >= g => acc,
            _ => Some((t, g)),
        })
    };
    let overall = worst(&mut gaps.iter()).expect("grid has >= 2 points");
    let windowed = worst(&mut gaps.iter().filter(|(t, _)| *t >= lo && *t <= hi));

    let short = logspace(SHORT_TIME_WINDOW.0, SHORT_TIME_WINDOW.1, SHORT_TIME_POINTS);
    let slope = |which| -> Result<f64, CliError> {
        let rows = evaluate(&cfg, which, &short)?;
        Ok(loglog_slope(&short, &rows.iter().map(|r| r.defect_e).collect::<Vec<_>>()))
    };
    let (slope_micro, slope_me) = (slope(EngineName::Microscopic)?, slope(EngineName::Master)?);

    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_path());
    let rules = AuditRules { conserving: vec!["_micro".into(), "_me".into()], block_column: None };
    write_and_audit(&Table::joint(&micro, &me, ["_micro", "_me"]), cfg.config.output.format, &path, &rules)?;

    let summary = json!({
        "config": cfg.path.display().to_string(),
        "max_eta_gap": json_number(overall.1),
        "max_eta_gap_t": json_number(overall.0),
        "window": [json_number(lo), json_number(hi)],
        "max_eta_gap_in_window": windowed.map_or(Value::Null, |w| json_number(w.1)),
        "max_eta_gap_in_window_t": windowed.map_or(Value::Null, |w| json_number(w.0)),
        "short_time_window": [json_number(SHORT_TIME_WINDOW.0), json_number(SHORT_TIME_WINDOW.1)],
        "short_time_points": SHORT_TIME_POINTS,
        "defect_e_slope_micro": json_number(slope_micro),
        "defect_e_slope_me": json_number(slope_me),
        "recurrence_warning_rows": micro.iter().filter(|r| r.recurrence_warning).count(),
    });
    let spath = summary_path(&path);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&spath, text).map_err(|e| CliError::io(&spath, e))?;
    log::info!("wrote {} and {}", path.display(), spath.display());
    Ok((path, spath))
}

/// Parses a comma-separated value list.
pub fn parse_values(config: &Path, values: &str) -> Result<Vec<f64>, CliError> {
    let out = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::schema(config, format!("--values: {s:?} is not a finite number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err(CliError::schema(config, "--values: at least one value is required"));
    }
    Ok(out)
}

/// `sweep`: returns the written file.
pub fn sweep(config: &Path, param: &str, values: &[f64], output: Option<&Path>) -> Result<PathBuf, CliError> {
    let base = load(config, Command::Sweep)?;
    let which = SweepParam::parse(param).ok_or_else(|| {
        CliError::schema(config, format!("--param: unknown parameter {param:?} (expected phi, alpha0_re or gamma)"))
    })?;
    if values.is_empty() {
        return Err(CliError::schema(config, "--values: at least one value is required"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let results: Vec<Result<(f64, Table), CliError>> = sorted
        .par_iter()
        .map(|&v| {
            let mut cfg = base.clone();
            which.apply(&mut cfg, v);
            cfg.validate(Command::Sweep)?;
            let rows = evaluate(&cfg, cfg.config.engine, &grid(&cfg))?;
            warn_recurrence(&rows);
            Ok((v, Table::from_rows(&rows)))
        })
        .collect();
    let blocks = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| base.output_path());
    let rules = AuditRules { conserving: vec![String::new()], block_column: Some("sweep_value".into()) };
    write_and_audit(&Table::tagged(&blocks, "sweep_value"), base.config.output.format, &path, &rules)?;
    log::info!("wrote {} sweep blocks to {}", blocks.len(), path.display());
    Ok(path)
}

/// Dispatches a parsed command line; returns the files written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Cmd::Run { config, output } => Ok(vec![run(&config, output.as_deref())?]),
        Cmd::Compare { config, output } => {
            let (a, b) = compare(&config, output.as_deref())?;
            Ok(vec![a, b])
        }
        Cmd::Sweep { config, param, values, output } => {
            let values = parse_values(&config, &values)?;
            Ok(vec![sweep(&config, &param, &values, output.as_deref())?])
        }
    }
}
