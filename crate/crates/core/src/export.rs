//! Plain-text serialisation of simulation results.
//!
//! Every float is printed with 17 significant digits in scientific notation,
//! which parses back to the identical binary value. Files are first written
//! to a staging directory next to the destination and only moved into place
//! once all of them were written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::{echo_config, fmt_real};
use crate::protocol::{MtcComparison, ScenarioConfig, SimulationResult, Snapshot};
use crate::scalar::Real;

pub const PROBE_SERIES_FILE: &str = "probe_series.csv";
pub const INITIATION_FILE: &str = "initiation_table.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CONFIG_MARKER: &str = "--- resolved configuration ---";

fn opt<S: Real>(v: Option<S>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn probe_series_csv<S: Real>(result: &SimulationResult<S>) -> String {
    let mut out = String::from("time_s,probe_id,C_E_M,C_RE_M,T_K\n");
    for s in &result.probe_series {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_real(s.time),
            s.probe_id,
            fmt_real(s.c_e),
            fmt_real(s.c_re),
            opt(s.temperature)
        );
    }
    out
}

pub fn initiation_csv<S: Real>(result: &SimulationResult<S>) -> String {
    let mut out = String::from("location,time_s,C_RE_M\n");
    for e in &result.initiation_table {
        let _ = writeln!(
            out,
            "\"({}, {})\",{},{}",
            fmt_real(e.x),
            fmt_real(e.y),
            opt(e.time),
            opt(e.c_re)
        );
    }
    out
}

/// One block per quantity: three header lines, then one line per grid row.
pub fn snapshot_text<S: Real>(blocks: &[&Snapshot<S>]) -> String {
    let mut out = String::new();
    for (n, snap) in blocks.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        let f = &snap.field;
        let _ = writeln!(out, "quantity {}", snap.quantity.label());
        let _ = writeln!(out, "time_s {}", fmt_real(snap.time));
        let _ = writeln!(out, "grid {} {}", f.m1(), f.m2());
        for j in 0..f.m2() {
            let row: Vec<String> = f.row(j).iter().map(|&v| fmt_real(v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn summary_text<S: Real>(result: &SimulationResult<S>, cfg: &ScenarioConfig<S>) -> String {
    let s = &result.summary;
    let mut out = String::new();
    let _ = writeln!(out, "peak_T_K = {}", opt(result.peak_t));
    let verdict = match result.safety_ok() {
        Some(true) => "true",
        Some(false) => "false",
        None => "not_simulated",
    };
    let _ = writeln!(out, "safety_ok = {verdict}");
    let _ = writeln!(out, "aborted = {}", result.aborted);
    let _ = writeln!(out, "pulses_completed = {}", s.pulses_completed);
    let _ = writeln!(out, "transport_time_s = {}", fmt_real(s.transport_time));
    let _ = writeln!(out, "heated_time_s = {}", fmt_real(s.heated_time));
    let _ = writeln!(out, "N_ep_per_m2 = {}", fmt_real(s.n_ep));
    let _ = writeln!(out, "mtc_initial_per_s = {}", fmt_real(s.mu_initial));
    let _ = writeln!(out, "mean_C_E_M = {}", fmt_real(s.mean_c_e));
    let _ = writeln!(out, "mean_C_RE_M = {}", fmt_real(s.mean_c_re));
    let _ = writeln!(
        out,
        "dose_fraction_above_0.025M = {}",
        fmt_real(s.dose_fraction)
    );
    let peaks: Vec<String> = result.pulse_peaks.iter().map(|&p| fmt_real(p)).collect();
    let _ = writeln!(out, "pulse_peaks_K = [{}]", peaks.join(", "));
    out.push('\n');
    out.push_str(CONFIG_MARKER);
    out.push('\n');
    out.push_str(&echo_config(cfg));
    out
}

/// `(file name, contents)` of every file describing `result`.
pub fn render_result<S: Real>(
    result: &SimulationResult<S>,
    cfg: &ScenarioConfig<S>,
) -> Vec<(String, String)> {
    let mut files = vec![
        (PROBE_SERIES_FILE.to_string(), probe_series_csv(result)),
        (INITIATION_FILE.to_string(), initiation_csv(result)),
        (SUMMARY_FILE.to_string(), summary_text(result, cfg)),
    ];
    // Snapshots arrive grouped by request; one file per requested time.
    let mut start = 0;
    let mut index = 0;
    while start < result.snapshots.len() {
        let first = &result.snapshots[start];
        let end = result.snapshots[start..]
            .iter()
            .position(|s| s.requested != first.requested || s.time != first.time)
            .map_or(result.snapshots.len(), |n| start + n);
        let blocks: Vec<&Snapshot<S>> = result.snapshots[start..end].iter().collect();
        files.push((format!("snapshot_{index:03}.txt"), snapshot_text(&blocks)));
        index += 1;
        start = end;
    }
    files
}

pub fn comparison_csv<S: Real>(cmp: &MtcComparison<S>) -> String {
    let mut out = String::from("probe_id,max_abs_M,max_rel,final_abs_M,final_rel\n");
    for d in &cmp.deviations {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            d.probe_id,
            fmt_real(d.max_abs),
            fmt_real(d.max_rel),
            fmt_real(d.final_abs),
            fmt_real(d.final_rel)
        );
    }
    out
}

/// Writes `files` into `dir` all-or-nothing.
///
/// On any failure no new file is left in `dir`.
pub fn write_files(dir: &Path, files: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let staging = tempfile::Builder::new()
        .prefix(".staging")
        .tempdir_in(dir)?;
    for (name, contents) in files {
        fs::write(staging.path().join(name), contents)?;
    }
    let mut placed = Vec::with_capacity(files.len());
    for (name, _) in files {
        let target = dir.join(name);
        if let Err(e) = fs::rename(staging.path().join(name), &target) {
            for p in &placed {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        placed.push(target);
    }
    Ok(placed)
}

/// Writes the full file set of one run into `dir`.
pub fn export_result<S: Real>(
    result: &SimulationResult<S>,
    cfg: &ScenarioConfig<S>,
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    write_files(dir, &render_result(result, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::params::PulseProtocol;
    use crate::protocol::{run_protocol, SafetyMode, StepSizes};

    fn quick() -> (ScenarioConfig<f64>, SimulationResult<f64>) {
        let cfg = ScenarioConfig {
            grid: Grid2D::new(5, 5, 1.0).unwrap(),
            protocol: PulseProtocol {
                pulse_count: 2,
                t_m: 4.0,
                ..Default::default()
            },
            steps: StepSizes {
                transport: 1.0,
                heating: 2e-5,
                cooling: 1e-3,
            },
            safety: SafetyMode::ReportOnly,
            ..Default::default()
        };
        let mut cfg = cfg;
        cfg.output.snapshot_times = vec![2.0, 8.16];
        let r = run_protocol(&cfg).unwrap();
        (cfg, r)
    }

    #[test]
    fn file_set_and_layout() {
        let (cfg, r) = quick();
        let files = render_result(&r, &cfg);
        let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
        assert_eq!(
            names,
            [
                PROBE_SERIES_FILE,
                INITIATION_FILE,
                SUMMARY_FILE,
                "snapshot_000.txt",
                "snapshot_001.txt"
            ]
        );
        let csv = &files[0].1;
        assert_eq!(csv.lines().count(), 1 + 2 * 5 * 3);
        let first = csv.lines().nth(1).unwrap();
        assert_eq!(first.split(',').count(), 5);
        assert!(first.starts_with("8.0000000000000002e-2,0,"));
        let snap = &files[3].1;
        let lines: Vec<&str> = snap.lines().collect();
        assert_eq!(lines[0], "quantity C_E");
        assert_eq!(lines[2], "grid 5 5");
        assert_eq!(lines[3].split(' ').count(), 5);
        assert_eq!(lines[8], "");
        assert_eq!(lines[9], "quantity C_RE");
        let verdict = format!("safety_ok = {}", r.safety_ok().unwrap());
        assert!(files[2].1.contains(&verdict));
        assert!(files[2].1.contains(CONFIG_MARKER));
    }

    #[test]
    fn values_round_trip_bitwise() {
        let (cfg, r) = quick();
        let csv = probe_series_csv(&r);
        for (line, s) in csv.lines().skip(1).zip(&r.probe_series) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[0].parse::<f64>().unwrap().to_bits(), s.time.to_bits());
            assert_eq!(cols[3].parse::<f64>().unwrap().to_bits(), s.c_re.to_bits());
            assert_eq!(
                cols[4].parse::<f64>().unwrap().to_bits(),
                s.temperature.unwrap().to_bits()
            );
        }
        let summary = summary_text(&r, &cfg);
        let echoed = summary.split(CONFIG_MARKER).nth(1).unwrap();
        assert_eq!(crate::config::parse_config::<f64>(echoed).unwrap(), cfg);
    }

    #[test]
    fn empty_probe_list_gives_header_only() {
        let (mut cfg, _) = quick();
        cfg.probes.clear();
        let r = run_protocol(&cfg).unwrap();
        assert_eq!(probe_series_csv(&r), "time_s,probe_id,C_E_M,C_RE_M,T_K\n");
    }

    #[test]
    fn export_is_reproducible_and_clean() {
        let (cfg, r) = quick();
        let dir = tempfile::tempdir().unwrap();
        let a = export_result(&r, &cfg, dir.path()).unwrap();
        let first: Vec<Vec<u8>> = a.iter().map(|p| fs::read(p).unwrap()).collect();
        let b = export_result(&r, &cfg, dir.path()).unwrap();
        let second: Vec<Vec<u8>> = b.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        let entries = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(entries, a.len());
    }

    #[test]
    fn unwritable_destination_is_an_error() {
        let (cfg, r) = quick();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(export_result(&r, &cfg, &blocker.join("out")).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
