//! Scenario configuration documents.
//!
//! The document is TOML with five sections. Every key is optional; omitted
//! keys take the default scenario values. Quantities keep the units of the
//! parameter table (mm, s, M, V; SI for the thermal properties).
//!
//! ```toml
//! [tissue]
//! D = 1e-4
//! eps = 0.18
//!
//! [protocol]
//! t_ep = 0.08
//! PN = 10
//! mtc_source = "pore"     # pore | reference | zero
//! safety = "strict"       # strict | report
//!
//! [grid]
//! M1 = 101
//! M2 = 101
//!
//! [probes]
//! points = [[0.1, 0.5], [0.5, 0.5], [0.9, 0.5]]
//!
//! [output]
//! cadence = 1.0
//! snapshot_times = [600.08]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;
use toml::de::DeTable;
use toml::{Table, Value};

use crate::error::ModelError;
use crate::grid::Grid2D;
use crate::protocol::{MtcSource, Probe, SafetyMode, ScenarioConfig};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}malformed document: {message}", at(*line))]
    Syntax {
        line: Option<usize>,
        message: String,
    },
    #[error("{}unknown section [{section}]", at(Some(*line)))]
    UnknownSection { section: String, line: usize },
    #[error("{}unknown key `{key}` in [{section}]", at(Some(*line)))]
    UnknownKey {
        section: String,
        key: String,
        line: usize,
    },
    #[error("{}`{key}` must be {expected}", at(Some(*line)))]
    Type {
        key: String,
        expected: &'static str,
        line: usize,
    },
    #[error("{}invalid value: {source}", at(*line))]
    Range {
        line: Option<usize>,
        source: ModelError,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ConfigError {
    /// 1-based line the error refers to, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. } | ConfigError::Range { line, .. } => *line,
            ConfigError::UnknownSection { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::Type { line, .. } => Some(*line),
            ConfigError::Io { .. } => None,
        }
    }
}

fn at(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

const TISSUE_KEYS: [&str; 18] = [
    "sigma", "r_c", "alpha", "V_ep", "N0", "q", "D", "R_P", "eps", "P", "rho", "c", "k", "h",
    "T_b", "tau", "L", "C2",
];
const PROTOCOL_KEYS: [&str; 11] = [
    "phi0",
    "phiL",
    "t_ep",
    "t_M",
    "PN",
    "mtc_source",
    "safety",
    "enforce_field_limit",
    "thermal",
    "f_p",
    "d_m",
];
const GRID_KEYS: [&str; 5] = ["M1", "M2", "dt_transport", "dt_heating", "dt_cooling"];
const PROBE_KEYS: [&str; 1] = ["points"];
const OUTPUT_KEYS: [&str; 5] = [
    "cadence",
    "snapshot_times",
    "initiation_y",
    "initiation_x",
    "initiation_floor",
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "tissue" => &TISSUE_KEYS,
        "protocol" => &PROTOCOL_KEYS,
        "grid" => &GRID_KEYS,
        "probes" => &PROBE_KEYS,
        "output" => &OUTPUT_KEYS,
        _ => return None,
    })
}

/// 1-based line containing byte `offset`.
fn line_of(doc: &str, offset: usize) -> usize {
    doc.as_bytes()[..offset.min(doc.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Line of every `section.key` in the document.
type LineMap = BTreeMap<(String, String), usize>;

fn span_line(doc: &str, span: Range<usize>) -> usize {
    line_of(doc, span.start)
}

/// Values of one section, with line lookup for error reporting.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    lines: &'a LineMap,
}

impl Section<'_> {
    fn line(&self, key: &str) -> usize {
        self.lines
            .get(&(self.name.to_string(), key.to_string()))
            .copied()
            .unwrap_or(0)
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn type_err(&self, key: &str, expected: &'static str) -> ConfigError {
        ConfigError::Type {
            key: key.to_string(),
            expected,
            line: self.line(key),
        }
    }

    fn float(&self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key) {
            *slot = as_float(v).ok_or_else(|| self.type_err(key, "a number"))?;
        }
        Ok(())
    }

    fn real<S: Real>(&self, key: &str, slot: &mut S) -> Result<(), ConfigError> {
        let mut v = slot.to_f64_lossy();
        self.float(key, &mut v)?;
        if self.get(key).is_some() {
            *slot = S::lit(v);
        }
        Ok(())
    }

    fn count(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(n)) if *n >= 0 => Ok(Some(*n as u64)),
            Some(_) => Err(self.type_err(key, "a nonnegative integer")),
        }
    }

    fn flag(&self, key: &str, slot: &mut bool) -> Result<(), ConfigError> {
        match self.get(key) {
            None => Ok(()),
            Some(Value::Boolean(b)) => {
                *slot = *b;
                Ok(())
            }
            Some(_) => Err(self.type_err(key, "true or false")),
        }
    }

    fn text(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.type_err(key, "a string")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(as_float)
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| self.type_err(key, "an array of numbers")),
            Some(_) => Err(self.type_err(key, "an array of numbers")),
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(n) => Some(*n as f64),
        _ => None,
    }
}

/// Maps a validation failure back to the line of the key it names.
fn range_error(err: ModelError, lines: &LineMap) -> ConfigError {
    let name = match &err {
        ModelError::NonPositive { name, .. } | ModelError::OutOfRange { name, .. } => Some(*name),
        ModelError::TransmembraneOverflow { .. } => Some("phi0"),
        _ => None,
    };
    let line = name.and_then(|n| {
        lines
            .iter()
            .find(|((_, key), _)| key == n || (n == "probe" && key == "points"))
            .map(|(_, &l)| l)
    });
    ConfigError::Range { line, source: err }
}

/// Parses and validates a configuration document.
///
/// Only the stability of the chosen steps is left unchecked, so that callers
/// can report it separately.
pub fn parse_config<S: Real>(doc: &str) -> Result<ScenarioConfig<S>, ConfigError> {
    let spanned = DeTable::parse(doc).map_err(|e| ConfigError::Syntax {
        line: e.span().map(|s| line_of(doc, s.start)),
        message: e.message().to_string(),
    })?;
    let mut lines = LineMap::new();
    for (section, value) in spanned.get_ref().iter() {
        let section_name = section.get_ref().to_string();
        let section_line = span_line(doc, section.span());
        let Some(allowed) = section_keys(&section_name) else {
            return Err(ConfigError::UnknownSection {
                section: section_name,
                line: section_line,
            });
        };
        let toml::de::DeValue::Table(entries) = value.get_ref() else {
            return Err(ConfigError::Type {
                key: section_name,
                expected: "a section",
                line: section_line,
            });
        };
        for (key, _) in entries.iter() {
            let key_name = key.get_ref().to_string();
            let line = span_line(doc, key.span());
            if !allowed.contains(&key_name.as_str()) {
                return Err(ConfigError::UnknownKey {
                    section: section_name,
                    key: key_name,
                    line,
                });
            }
            lines.insert((section_name.clone(), key_name), line);
        }
    }
    let table: Table = toml::from_str(doc).map_err(|e| ConfigError::Syntax {
        line: e.span().map(|s| line_of(doc, s.start)),
        message: e.message().to_string(),
    })?;
    let section = |name: &'static str| Section {
        name,
        table: table.get(name).and_then(Value::as_table),
        lines: &lines,
    };

    let mut cfg = ScenarioConfig::<S>::default();

    let tissue = section("tissue");
    {
        let p = &mut cfg.params;
        for (key, slot) in [
            ("sigma", &mut p.sigma),
            ("r_c", &mut p.r_c),
            ("alpha", &mut p.alpha),
            ("V_ep", &mut p.v_ep),
            ("N0", &mut p.n0),
            ("q", &mut p.q),
            ("D", &mut p.d),
            ("R_P", &mut p.r_p),
            ("eps", &mut p.eps),
            ("P", &mut p.p),
            ("rho", &mut p.rho),
            ("c", &mut p.c),
            ("k", &mut p.k),
            ("h", &mut p.h),
            ("T_b", &mut p.t_b),
            ("tau", &mut p.tau),
            ("L", &mut p.l),
            ("C2", &mut p.c2),
        ] {
            tissue.real(key, slot)?;
        }
    }

    let protocol = section("protocol");
    protocol.real("phi0", &mut cfg.protocol.phi0)?;
    protocol.real("phiL", &mut cfg.protocol.phi_l)?;
    protocol.real("t_ep", &mut cfg.protocol.t_ep)?;
    protocol.real("t_M", &mut cfg.protocol.t_m)?;
    if let Some(n) = protocol.count("PN")? {
        cfg.protocol.pulse_count =
            u32::try_from(n).map_err(|_| protocol.type_err("PN", "a pulse count below 2^32"))?;
    }
    if let Some(name) = protocol.text("mtc_source")? {
        cfg.mtc_source = MtcSource::from_name(name).ok_or_else(|| {
            protocol.type_err("mtc_source", "one of \"pore\", \"reference\", \"zero\"")
        })?;
    }
    if let Some(name) = protocol.text("safety")? {
        cfg.safety = SafetyMode::from_name(name)
            .ok_or_else(|| protocol.type_err("safety", "one of \"strict\", \"report\""))?;
    }
    protocol.flag("enforce_field_limit", &mut cfg.enforce_field_limit)?;
    protocol.flag("thermal", &mut cfg.thermal)?;
    protocol.real("f_p", &mut cfg.reference_mtc.pore_fraction)?;
    protocol.real("d_m", &mut cfg.reference_mtc.membrane_thickness)?;

    let grid = section("grid");
    let m1 = grid.count("M1")?.unwrap_or(cfg.grid.m1() as u64) as usize;
    let m2 = grid.count("M2")?.unwrap_or(cfg.grid.m2() as u64) as usize;
    grid.real("dt_transport", &mut cfg.steps.transport)?;
    grid.real("dt_heating", &mut cfg.steps.heating)?;
    grid.real("dt_cooling", &mut cfg.steps.cooling)?;
    cfg.grid = Grid2D::new(m1, m2, cfg.params.l).map_err(|e| range_error(e, &lines))?;

    let probes = section("probes");
    if let Some(v) = probes.get("points") {
        let bad = || probes.type_err("points", "an array of [x, y] pairs");
        let items = v.as_array().ok_or_else(bad)?;
        cfg.probes = items
            .iter()
            .map(|item| {
                let pair = item.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
                match (as_float(&pair[0]), as_float(&pair[1])) {
                    (Some(x), Some(y)) => Ok(Probe {
                        x: S::lit(x),
                        y: S::lit(y),
                    }),
                    _ => Err(bad()),
                }
            })
            .collect::<Result<_, _>>()?;
    }

    let output = section("output");
    output.real("cadence", &mut cfg.output.cadence)?;
    if let Some(ts) = output.floats("snapshot_times")? {
        cfg.output.snapshot_times = ts.into_iter().map(S::lit).collect();
    }
    output.real("initiation_y", &mut cfg.output.initiation_y)?;
    if let Some(xs) = output.floats("initiation_x")? {
        cfg.output.initiation_x = xs.into_iter().map(S::lit).collect();
    }
    output.real("initiation_floor", &mut cfg.output.initiation_floor)?;

    cfg.check_inputs().map_err(|e| range_error(e, &lines))?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config<S: Real>(path: &std::path::Path) -> Result<ScenarioConfig<S>, ConfigError> {
    let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&doc)
}

/// 17 significant digits; parses back to the identical value.
pub fn fmt_real<S: Real>(v: S) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

fn fmt_list<S: Real>(values: &[S]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt_real(v)).collect();
    format!("[{}]", items.join(", "))
}

/// Full resolved configuration as a document that parses back to `cfg`.
pub fn echo_config<S: Real>(cfg: &ScenarioConfig<S>) -> String {
    let mut out = String::new();
    let p = &cfg.params;
    out.push_str("[tissue]\n");
    for (key, v) in [
        ("sigma", p.sigma),
        ("r_c", p.r_c),
        ("alpha", p.alpha),
        ("V_ep", p.v_ep),
        ("N0", p.n0),
        ("q", p.q),
        ("D", p.d),
        ("R_P", p.r_p),
        ("eps", p.eps),
        ("P", p.p),
        ("rho", p.rho),
        ("c", p.c),
        ("k", p.k),
        ("h", p.h),
        ("T_b", p.t_b),
        ("tau", p.tau),
        ("L", p.l),
        ("C2", p.c2),
    ] {
        let _ = writeln!(out, "{key} = {}", fmt_real(v));
    }
    let pr = &cfg.protocol;
    out.push_str("\n[protocol]\n");
    let _ = writeln!(out, "phi0 = {}", fmt_real(pr.phi0));
    let _ = writeln!(out, "phiL = {}", fmt_real(pr.phi_l));
    let _ = writeln!(out, "t_ep = {}", fmt_real(pr.t_ep));
    let _ = writeln!(out, "t_M = {}", fmt_real(pr.t_m));
    let _ = writeln!(out, "PN = {}", pr.pulse_count);
    let _ = writeln!(out, "mtc_source = \"{}\"", cfg.mtc_source.name());
    let _ = writeln!(out, "safety = \"{}\"", cfg.safety.name());
    let _ = writeln!(out, "enforce_field_limit = {}", cfg.enforce_field_limit);
    let _ = writeln!(out, "thermal = {}", cfg.thermal);
    let _ = writeln!(out, "f_p = {}", fmt_real(cfg.reference_mtc.pore_fraction));
    let _ = writeln!(
        out,
        "d_m = {}",
        fmt_real(cfg.reference_mtc.membrane_thickness)
    );
    out.push_str("\n[grid]\n");
    let _ = writeln!(out, "M1 = {}", cfg.grid.m1());
    let _ = writeln!(out, "M2 = {}", cfg.grid.m2());
    let _ = writeln!(out, "dt_transport = {}", fmt_real(cfg.steps.transport));
    let _ = writeln!(out, "dt_heating = {}", fmt_real(cfg.steps.heating));
    let _ = writeln!(out, "dt_cooling = {}", fmt_real(cfg.steps.cooling));
    out.push_str("\n[probes]\n");
    let points: Vec<String> = cfg
        .probes
        .iter()
        .map(|pt| format!("[{}, {}]", fmt_real(pt.x), fmt_real(pt.y)))
        .collect();
    let _ = writeln!(out, "points = [{}]", points.join(", "));
    let o = &cfg.output;
    out.push_str("\n[output]\n");
    let _ = writeln!(out, "cadence = {}", fmt_real(o.cadence));
    let _ = writeln!(out, "snapshot_times = {}", fmt_list(&o.snapshot_times));
    let _ = writeln!(out, "initiation_y = {}", fmt_real(o.initiation_y));
    let _ = writeln!(out, "initiation_x = {}", fmt_list(&o.initiation_x));
    let _ = writeln!(out, "initiation_floor = {}", fmt_real(o.initiation_floor));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PulseProtocol, TissueParams};

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: ScenarioConfig<f64> = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.params, TissueParams::default());
    }

    #[test]
    fn pulse_settings() {
        let cfg: ScenarioConfig<f64> = parse_config("[protocol]\nt_ep = 0.08\nPN = 10\n").unwrap();
        assert_eq!(cfg.protocol, PulseProtocol::default());
        let cfg: ScenarioConfig<f64> =
            parse_config("[protocol]\nt_ep = 0.02\nPN = 3\nmtc_source = \"zero\"\n").unwrap();
        assert_eq!(cfg.protocol.t_ep, 0.02);
        assert_eq!(cfg.protocol.pulse_count, 3);
        assert_eq!(cfg.mtc_source, MtcSource::Zero);
    }

    #[test]
    fn eps_out_of_range_names_key_and_line() {
        let err = parse_config::<f64>("[tissue]\nD = 1e-4\neps = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Range { .. }));
        assert_eq!(err.line(), Some(3));
        assert!(err.to_string().contains("eps"), "{err}");
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let err = parse_config::<f64>("[tissue]\nsigma = 0.2\nporosity = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("porosity"));
        assert_eq!(err.line(), Some(3));
        let err = parse_config::<f64>("\n[electrodes]\ngap = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 2, .. }));
        let err = parse_config::<f64>("eps = 0.2\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { .. }));
    }

    #[test]
    fn malformed_and_mistyped() {
        let err = parse_config::<f64>("[tissue]\n\nD = = 3\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::Syntax { line: Some(3), .. }),
            "{err:?}"
        );
        let err = parse_config::<f64>("[grid]\nM1 = 10.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Type { line: 2, .. }));
        let err = parse_config::<f64>("[protocol]\nsafety = \"loose\"\n").unwrap_err();
        assert!(err.to_string().contains("safety"));
        let err = parse_config::<f64>("[probes]\npoints = [[0.1, 0.5], [2.0, 0.5]]\n").unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn field_limit_is_configurable() {
        assert!(parse_config::<f64>("[protocol]\nphi0 = 40\n").is_err());
        let cfg: ScenarioConfig<f64> =
            parse_config("[protocol]\nphi0 = 40\nenforce_field_limit = false\n").unwrap();
        assert_eq!(cfg.protocol.phi0, 40.0);
    }

    #[test]
    fn integers_accepted_for_reals() {
        let cfg: ScenarioConfig<f64> = parse_config("[tissue]\nC2 = 2\n").unwrap();
        assert_eq!(cfg.params.c2, 2.0);
    }

    #[test]
    fn echo_round_trips() {
        let doc = "[tissue]\nD = 1.2345678901234567e-4\ntau = 100\n[protocol]\nPN = 3\nsafety = \"report\"\nthermal = false\n\
                   [grid]\nM1 = 21\nM2 = 11\n[probes]\npoints = []\n[output]\nsnapshot_times = [0.1, 1800.24]\n";
        let cfg: ScenarioConfig<f64> = parse_config(doc).unwrap();
        let echoed = echo_config(&cfg);
        assert_eq!(parse_config::<f64>(&echoed).unwrap(), cfg);
        assert_eq!(echo_config(&parse_config::<f64>(&echoed).unwrap()), echoed);
        let cfg32: ScenarioConfig<f32> = parse_config(doc).unwrap();
        assert_eq!(parse_config::<f32>(&echo_config(&cfg32)).unwrap(), cfg32);
    }

    #[test]
    fn stability_is_not_a_parse_error() {
        let cfg: ScenarioConfig<f64> = parse_config("[grid]\ndt_transport = 0.3\n").unwrap();
        assert!(cfg.check_stability().is_err());
    }
}
