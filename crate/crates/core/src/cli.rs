//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error (also I/O
//! failures), 2 safety abort, 3 stability violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, ConfigError};
use crate::export::{comparison_csv, export_result, write_files, COMPARISON_FILE};
use crate::protocol::{compare_mtc, run_protocol, sweep, ProtocolError, ScenarioConfig, SweepAxis};
use crate::validate::invariant_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SAFETY: i32 = 2;
pub const EXIT_STABILITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tissue-ep",
    version,
    about = "Tissue electroporation drug-delivery simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and export its results.
    Run {
        /// Configuration file; defaults apply when omitted.
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "output")]
        out: PathBuf,
    },
    /// Run one scenario per value of a parameter.
    Sweep {
        config: Option<PathBuf>,
        /// P, D, t_ep or PN.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        values: Vec<f64>,
        #[arg(short, long, default_value = "output")]
        out: PathBuf,
    },
    /// Run a scenario with both MTC models and report their deviation.
    Compare {
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "output")]
        out: PathBuf,
    },
    /// Run the built-in invariant suite on reduced grids.
    Validate,
    /// Print both stability bounds and the configured steps.
    Stability { config: Option<PathBuf> },
}

/// Parses `args` (including the program name) and executes the command.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Run { config, out: dir } => cmd_run(config.as_deref(), &dir, out, err),
        Command::Sweep {
            config,
            axis,
            values,
            out: dir,
        } => cmd_sweep(config.as_deref(), &axis, &values, &dir, out, err),
        Command::Compare { config, out: dir } => cmd_compare(config.as_deref(), &dir, out, err),
        Command::Validate => cmd_validate(out),
        Command::Stability { config } => cmd_stability(config.as_deref(), out, err),
    }
}

fn load(path: Option<&Path>, err: &mut dyn Write) -> Option<ScenarioConfig<f64>> {
    let result = match path {
        Some(p) => load_config(p),
        None => Ok(ScenarioConfig::default()),
    };
    match result {
        Ok(cfg) => Some(cfg),
        Err(e) => {
            report_config_error(&e, path, err);
            None
        }
    }
}

fn report_config_error(e: &ConfigError, path: Option<&Path>, err: &mut dyn Write) {
    match path {
        Some(p) => {
            let _ = writeln!(err, "error: {}: {e}", p.display());
        }
        None => {
            let _ = writeln!(err, "error: {e}");
        }
    }
}

fn exit_code(e: &ProtocolError<f64>) -> i32 {
    match e {
        ProtocolError::Invalid(_) | ProtocolError::Solver(_) => EXIT_CONFIG,
        ProtocolError::Stability(_) => EXIT_STABILITY,
        ProtocolError::SafetyAbort { .. } => EXIT_SAFETY,
    }
}

fn export(
    result: &crate::protocol::SimulationResult<f64>,
    cfg: &ScenarioConfig<f64>,
    dir: &Path,
    err: &mut dyn Write,
) -> bool {
    match export_result(result, cfg, dir) {
        Ok(_) => true,
        Err(e) => {
            let _ = writeln!(err, "error: cannot write results to {}: {e}", dir.display());
            false
        }
    }
}

fn describe(result: &crate::protocol::SimulationResult<f64>, out: &mut dyn Write) {
    let s = &result.summary;
    match result.peak_t {
        Some(p) => {
            let _ = writeln!(
                out,
                "peak T {p:.4} K, safety_ok {}",
                p < crate::params::DAMAGE_TEMPERATURE_K
            );
        }
        None => {
            let _ = writeln!(out, "temperature not simulated");
        }
    }
    let _ = writeln!(
        out,
        "pulses {}, mean C_RE {:.6e} M, fraction above 0.025 M {:.4}",
        s.pulses_completed, s.mean_c_re, s.dose_fraction
    );
}

fn cmd_run(path: Option<&Path>, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(cfg) = load(path, err) else {
        return EXIT_CONFIG;
    };
    match run_protocol(&cfg) {
        Ok(result) => {
            describe(&result, out);
            if !export(&result, &cfg, dir, err) {
                return EXIT_CONFIG;
            }
            let _ = writeln!(out, "results written to {}", dir.display());
            EXIT_OK
        }
        Err(ProtocolError::SafetyAbort { peak_t, partial }) => {
            let _ = writeln!(
                err,
                "safety abort: peak temperature {peak_t:.4} K reached the damage threshold after pulse {}",
                partial.summary.pulses_completed
            );
            if export(&partial, &cfg, dir, err) {
                let _ = writeln!(err, "partial results written to {}", dir.display());
            }
            EXIT_SAFETY
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_sweep(
    path: Option<&Path>,
    axis: &str,
    values: &[f64],
    dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let Some(axis) = SweepAxis::from_name(axis) else {
        let _ = writeln!(
            err,
            "error: unknown sweep axis `{axis}` (expected P, D, t_ep or PN)"
        );
        return EXIT_CONFIG;
    };
    let Some(cfg) = load(path, err) else {
        return EXIT_CONFIG;
    };
    let mut code = EXIT_OK;
    for (index, (value, outcome)) in values.iter().zip(sweep(&cfg, axis, values)).enumerate() {
        let item_dir = dir.join(format!("{}_{index:03}", axis.name()));
        let item_cfg = axis.apply(&cfg, *value).unwrap_or_else(|_| cfg.clone());
        let _ = write!(out, "{} = {value:e}: ", axis.name());
        match outcome {
            Ok(result) => {
                describe(&result, out);
                if !export(&result, &item_cfg, &item_dir, err) {
                    code = code.max(EXIT_CONFIG);
                }
            }
            Err(ProtocolError::SafetyAbort { peak_t, partial }) => {
                let _ = writeln!(out, "safety abort at {peak_t:.4} K");
                export(&partial, &item_cfg, &item_dir, err);
                code = code.max(EXIT_SAFETY);
            }
            Err(e) => {
                let _ = writeln!(out, "failed: {e}");
                code = code.max(exit_code(&e));
            }
        }
    }
    code
}

fn cmd_compare(path: Option<&Path>, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(cfg) = load(path, err) else {
        return EXIT_CONFIG;
    };
    match compare_mtc(&cfg) {
        Ok(cmp) => {
            let _ = writeln!(out, "probe  x  y  max_abs_M  max_rel  final_rel");
            for d in &cmp.deviations {
                let p = cfg.probes[d.probe_id];
                let _ = writeln!(
                    out,
                    "{}  {}  {}  {:.6e}  {:.6e}  {:.6e}",
                    d.probe_id, p.x, p.y, d.max_abs, d.max_rel, d.final_rel
                );
            }
            let pore_cfg = ScenarioConfig {
                mtc_source: crate::protocol::MtcSource::PoreResealing,
                ..cfg.clone()
            };
            let ref_cfg = ScenarioConfig {
                mtc_source: crate::protocol::MtcSource::Reference,
                ..cfg.clone()
            };
            let ok = export(&cmp.pore, &pore_cfg, &dir.join("pore"), err)
                && export(&cmp.reference, &ref_cfg, &dir.join("reference"), err)
                && match write_files(dir, &[(COMPARISON_FILE.to_string(), comparison_csv(&cmp))]) {
                    Ok(_) => true,
                    Err(e) => {
                        let _ = writeln!(err, "error: cannot write {}: {e}", dir.display());
                        false
                    }
                };
            if ok {
                EXIT_OK
            } else {
                EXIT_CONFIG
            }
        }
        Err(ProtocolError::SafetyAbort { peak_t, .. }) => {
            let _ = writeln!(err, "safety abort: peak temperature {peak_t:.4} K");
            EXIT_SAFETY
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_validate(out: &mut dyn Write) -> i32 {
    let checks = invariant_suite();
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        if c.detail.is_empty() {
            let _ = writeln!(out, "{status}  {}", c.name);
        } else {
            let _ = writeln!(out, "{status}  {} ({})", c.name, c.detail);
        }
        failed += usize::from(!c.passed);
    }
    let _ = writeln!(out, "{} checks, {failed} failed", checks.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}

fn cmd_stability(path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(cfg) = load(path, err) else {
        return EXIT_CONFIG;
    };
    let report = match cfg.stability() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    let _ = writeln!(out, "grid {} x {}", cfg.grid.m1(), cfg.grid.m2());
    let _ = writeln!(out, "transport bound  {:e} s", report.transport_bound);
    let _ = writeln!(out, "thermal bound    {:e} s", report.thermal_bound);
    let _ = writeln!(
        out,
        "dt_transport     {:e} s  {}",
        cfg.steps.transport,
        verdict(report.transport_ok)
    );
    let _ = writeln!(
        out,
        "dt_heating       {:e} s  {}",
        cfg.steps.heating,
        verdict(report.heating_ok)
    );
    let _ = writeln!(
        out,
        "dt_cooling       {:e} s  {}",
        cfg.steps.cooling,
        verdict(report.cooling_ok)
    );
    if report.transport_ok && (!cfg.thermal || report.heating_ok && report.cooling_ok) {
        EXIT_OK
    } else {
        EXIT_STABILITY
    }
}
