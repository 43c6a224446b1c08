//! Declarative scenarios: model, frames, run command and numerics in TOML.
//!
//! ```toml
//! [model]
//! kind = "kepler"
//! m = 1.0
//! alpha = 1.0
//! E = 0.5
//!
//! [[frames]]
//! name = "phi"
//! clock = { kind = "linear", offset = 0.0, rate = 1.0 }
//!
//! [run]
//! command = "evolve"
//! initial = [2.0, -0.5]
//! ```
//!
//! [`parse_scenario`] fills every default, so serializing a parsed scenario
//! and parsing it again gives the same value.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowOptions;
use crate::gauge::{GaugeClock, Sign};
use crate::models::energy::{frame_name, Metric, Potential};
use crate::models::kepler::{ANGULAR_FRAME, RADIAL_FRAME};
use crate::models::lattice::EMBEDDING_FRAME;
use crate::models::particle::{SPACE_FRAME, TIME_FRAME};
use crate::models::toy::{Q_FRAME, X_FRAME};

/// One problem in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based line, when the problem can be located.
    pub line: Option<usize>,
    /// Dotted path of the offending field.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                line: None,
                field: field.into(),
                message: message.into(),
            }],
        }
    }

    /// Whether some issue concerns `field`.
    pub fn mentions(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.field == field)
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn one_usize() -> usize {
    1
}

fn lattice_n() -> usize {
    128
}

fn lattice_dz() -> f64 {
    0.1
}

/// A branch choice of the energy model: reference slot and root sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotBranch {
    pub slot: usize,
    pub sign: Sign,
}

/// Model kind with its parameters, named as in the model constructors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelBlock {
    Particle {
        #[serde(default = "one_usize")]
        d: usize,
        #[serde(default = "one")]
        m: f64,
    },
    Kepler {
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(rename = "E", alias = "energy", default = "half")]
        energy: f64,
    },
    Toy {},
    Energy {
        dim: usize,
        metric: Metric,
        potential: Potential,
        energy: f64,
        branch: Vec<SlotBranch>,
    },
    Lattice {
        #[serde(default = "one_usize")]
        d: usize,
        #[serde(default = "lattice_n")]
        n: usize,
        #[serde(default = "lattice_dz")]
        dz: f64,
        #[serde(default)]
        mu: f64,
    },
}

impl ModelBlock {
    pub const KINDS: [&'static str; 5] = ["particle", "kepler", "toy", "energy", "lattice"];

    pub fn kind(&self) -> &'static str {
        match self {
            ModelBlock::Particle { .. } => "particle",
            ModelBlock::Kepler { .. } => "kepler",
            ModelBlock::Toy {} => "toy",
            ModelBlock::Energy { .. } => "energy",
            ModelBlock::Lattice { .. } => "lattice",
        }
    }

    /// Frame names the model provides.
    pub fn frame_names(&self) -> Vec<String> {
        match self {
            ModelBlock::Particle { .. } => vec![TIME_FRAME.into(), SPACE_FRAME.into()],
            ModelBlock::Kepler { .. } => vec![ANGULAR_FRAME.into(), RADIAL_FRAME.into()],
            ModelBlock::Toy {} => vec![X_FRAME.into(), Q_FRAME.into()],
            ModelBlock::Energy { branch, .. } => branch.iter().map(|b| frame_name(b.slot)).collect(),
            ModelBlock::Lattice { .. } => vec![EMBEDDING_FRAME.into()],
        }
    }
}

/// A frame: model frame name plus clock. Lattice frames take a Lorentz
/// transformation (`rapidity`, and `angle` for two dimensions) instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameBlock {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<GaugeClock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rapidity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Observables and reduced Hamiltonian of given points.
    Reduce,
    /// Reduced evolution of one initial condition.
    Evolve,
    /// Reference frame transformation of given points.
    Rrft,
    /// One gauge orbit with its cut intersections.
    Orbit,
    /// The model's invariant suite.
    #[default]
    Verify,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reduce" => Some(Command::Reduce),
            "evolve" => Some(Command::Evolve),
            "rrft" => Some(Command::Rrft),
            "orbit" => Some(Command::Orbit),
            "verify" => Some(Command::Verify),
            _ => None,
        }
    }
}

/// Which evolution route `evolve` integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Reduced Hamilton equations in `t`.
    #[default]
    Hamiltonian,
    /// Constraint flow from cut to cut.
    Geometric,
}

fn default_t1() -> f64 {
    1.0
}

fn default_samples() -> usize {
    11
}

fn default_s_range() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default)]
    pub command: Command,
    /// Source frame; the first frame block when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
    /// Target frame of `rrft`; the second frame block when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default)]
    pub t_hat: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// True-sector initial values of the source frame.
    #[serde(default)]
    pub initial: Vec<f64>,
    /// Points for `reduce` (frame layout without `y`) and `rrft` (true
    /// sector).
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_s_range")]
    pub s_range: [f64; 2],
    /// Cut parameters marked on an orbit.
    #[serde(default)]
    pub cuts: Vec<f64>,
    #[serde(default)]
    pub route: Route,
    #[serde(default = "default_output")]
    pub output: String,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            command: Command::default(),
            frame: None,
            target: None,
            t0: 0.0,
            t1: default_t1(),
            t_hat: 0.0,
            samples: default_samples(),
            initial: Vec::new(),
            points: Vec::new(),
            s_range: default_s_range(),
            cuts: Vec::new(),
            route: Route::default(),
            output: default_output(),
        }
    }
}

fn default_rtol() -> f64 {
    1e-10
}

fn default_atol() -> f64 {
    1e-12
}

fn default_fd_step() -> f64 {
    2e-4
}

fn default_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tolerance applied to every verification check instead of its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Random points per verification check.
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            rtol: default_rtol(),
            atol: default_atol(),
            fd_step: default_fd_step(),
            seed: 0,
            tol: None,
            points: default_points(),
        }
    }
}

impl Numerics {
    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions::with_tolerances(self.rtol, self.atol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelBlock,
    #[serde(default)]
    pub frames: Vec<FrameBlock>,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub numerics: Numerics,
}

/// Line of the first `key = …` inside `[section]` (or its `n`-th
/// occurrence of `[[section]]`).
fn locate(text: &str, section: &str, occurrence: usize, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut count: isize = -1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
            if current == section {
                count += 1;
            }
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            count = if current == section { 0 } else { -1 };
            continue;
        }
        if current == section && count == occurrence as isize {
            if key.is_empty() {
                return Some(i + 1);
            }
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn section_line(text: &str, section: &str, occurrence: usize) -> Option<usize> {
    let mut count = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line == format!("[{section}]") {
            return Some(i + 1);
        }
        if line == format!("[[{section}]]") {
            if count == occurrence {
                return Some(i + 1);
            }
            count += 1;
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Key assigned on a given line, for naming the field of a typed error.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let raw = text.lines().nth(line.checked_sub(1)?)?;
    let (k, _) = raw.split_once('=')?;
    Some(k.trim().to_string())
}

fn section_at_line(text: &str, line: usize) -> Option<String> {
    text.lines()
        .take(line)
        .filter_map(|l| {
            let l = l.trim();
            l.strip_prefix("[[")
                .and_then(|r| r.strip_suffix("]]"))
                .or_else(|| l.strip_prefix('[').and_then(|r| r.strip_suffix(']')))
                .map(|s| s.trim().to_string())
        })
        .last()
}

/// Parses and validates a scenario, filling defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        issues: vec![ConfigIssue {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            field: "<syntax>".into(),
            message: e.message().to_string(),
        }],
    })?;

    // Named errors for the common mistakes before the typed pass.
    let Some(model) = table.get("model").and_then(|m| m.as_table()) else {
        return Err(ConfigError {
            issues: vec![ConfigIssue {
                line: None,
                field: "model".into(),
                message: "missing [model] table".into(),
            }],
        });
    };
    match model.get("kind").and_then(|k| k.as_str()) {
        Some(kind) if ModelBlock::KINDS.contains(&kind) => {}
        Some(kind) => {
            return Err(ConfigError {
                issues: vec![ConfigIssue {
                    line: locate(text, "model", 0, "kind"),
                    field: "model.kind".into(),
                    message: format!("unknown model kind `{kind}`, expected one of {:?}", ModelBlock::KINDS),
                }],
            })
        }
        None => {
            return Err(ConfigError {
                issues: vec![ConfigIssue {
                    line: section_line(text, "model", 0),
                    field: "model.kind".into(),
                    message: "missing model kind".into(),
                }],
            })
        }
    }

    let mut scenario: Scenario = toml::from_str(text).map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let field = line
            .and_then(|l| {
                let key = key_on_line(text, l)?;
                Some(match section_at_line(text, l) {
                    Some(sec) => format!("{sec}.{key}"),
                    None => key,
                })
            })
            .or_else(|| line.and_then(|l| section_at_line(text, l)))
            .unwrap_or_else(|| "<scenario>".into());
        ConfigError {
            issues: vec![ConfigIssue {
                line,
                field,
                message: e.message().to_string(),
            }],
        }
    })?;
    fill_defaults(&mut scenario);
    validate_located(&scenario, Some(text))?;
    Ok(scenario)
}

/// Fills the defaults that depend on other fields.
pub fn fill_defaults(s: &mut Scenario) {
    let lattice = matches!(s.model, ModelBlock::Lattice { .. });
    for f in &mut s.frames {
        if lattice {
            if f.rapidity.is_none() {
                f.rapidity = Some(0.0);
            }
        } else if f.clock.is_none() {
            f.clock = Some(GaugeClock::linear(0.0, 1.0));
        }
    }
    if s.run.frame.is_none() {
        s.run.frame = s.frames.first().map(|f| f.name.clone());
    }
    if s.run.target.is_none() && s.frames.len() > 1 {
        s.run.target = Some(s.frames[1].name.clone());
    }
}

/// Checks the invariants of a scenario built in code.
pub fn validate(s: &Scenario) -> Result<(), ConfigError> {
    validate_located(s, None)
}

fn validate_located(s: &Scenario, text: Option<&str>) -> Result<(), ConfigError> {
    let mut issues = Vec::new();
    let mut push = |section: &str, occ: usize, key: &str, field: String, message: String| {
        let line = text.and_then(|t| locate(t, section, occ, key).or_else(|| section_line(t, section, occ)));
        issues.push(ConfigIssue { line, field, message });
    };

    let names = s.model.frame_names();
    let lattice = matches!(s.model, ModelBlock::Lattice { .. });
    for (i, f) in s.frames.iter().enumerate() {
        // Lattice frames are labelled inertial frames, named freely.
        if !lattice && !names.contains(&f.name) {
            push(
                "frames",
                i,
                "name",
                format!("frames[{i}].name"),
                format!("model `{}` has no frame `{}`; available: {names:?}", s.model.kind(), f.name),
            );
        }
        if lattice {
            if f.clock.is_some() {
                push(
                    "frames",
                    i,
                    "clock",
                    format!("frames[{i}].clock"),
                    "lattice frames take `rapidity`/`angle`, not a clock".into(),
                );
            }
            if f.angle.is_some() && !matches!(s.model, ModelBlock::Lattice { d: 2, .. }) {
                push(
                    "frames",
                    i,
                    "angle",
                    format!("frames[{i}].angle"),
                    "rotations need a two-dimensional lattice".into(),
                );
            }
        } else {
            match &f.clock {
                Some(c) if c.is_constant() => push(
                    "frames",
                    i,
                    "clock",
                    format!("frames[{i}].clock"),
                    "k̇(t) must be non-zero for at least one index; this clock never runs".into(),
                ),
                Some(GaugeClock::Polynomial { coefficients }) if coefficients.is_empty() => push(
                    "frames",
                    i,
                    "clock",
                    format!("frames[{i}].clock"),
                    "polynomial clock needs coefficients".into(),
                ),
                _ => {}
            }
            if f.rapidity.is_some() || f.angle.is_some() {
                push(
                    "frames",
                    i,
                    "rapidity",
                    format!("frames[{i}]"),
                    "`rapidity`/`angle` apply to lattice frames only".into(),
                );
            }
        }
        let clock_values = match &f.clock {
            Some(GaugeClock::Linear { offset, rate }) => vec![*offset, *rate],
            Some(GaugeClock::Polynomial { coefficients }) => coefficients.clone(),
            None => Vec::new(),
        };
        if clock_values.iter().chain(f.rapidity.iter()).chain(f.angle.iter()).any(|v| !v.is_finite()) {
            push("frames", i, "clock", format!("frames[{i}]"), "values must be finite".into());
        }
    }

    let frame_names: Vec<&str> = s.frames.iter().map(|f| f.name.as_str()).collect();
    for (key, value) in [("frame", &s.run.frame), ("target", &s.run.target)] {
        if let Some(v) = value {
            if !frame_names.contains(&v.as_str()) {
                push(
                    "run",
                    0,
                    key,
                    format!("run.{key}"),
                    format!("frame `{v}` is not declared in a [[frames]] block"),
                );
            }
        }
    }

    let n = &s.numerics;
    for (key, v) in [("rtol", n.rtol), ("atol", n.atol), ("fd_step", n.fd_step)] {
        if !(v > 0.0) || !v.is_finite() {
            push("numerics", 0, key, format!("numerics.{key}"), format!("must be positive, got {v}"));
        }
    }
    if let Some(t) = n.tol {
        if !(t > 0.0) || !t.is_finite() {
            push("numerics", 0, "tol", "numerics.tol".into(), format!("must be positive, got {t}"));
        }
    }
    if n.points == 0 {
        push("numerics", 0, "points", "numerics.points".into(), "must be at least 1".into());
    }
    // TOML integers are signed 64-bit.
    if n.seed > i64::MAX as u64 {
        push("numerics", 0, "seed", "numerics.seed".into(), format!("must not exceed {}", i64::MAX));
    }
    if s.run.samples == 0 {
        push("run", 0, "samples", "run.samples".into(), "must be at least 1".into());
    }
    for (key, v) in [("t0", s.run.t0), ("t1", s.run.t1), ("t_hat", s.run.t_hat)] {
        if !v.is_finite() {
            push("run", 0, key, format!("run.{key}"), "must be finite".into());
        }
    }

    // verify falls back to the model's own frames
    let needs_frames = match s.run.command {
        Command::Rrft => 2,
        Command::Verify => 0,
        _ => 1,
    };
    if s.frames.len() < needs_frames {
        push(
            "run",
            0,
            "command",
            "frames".into(),
            format!("command `{:?}` needs {needs_frames} frame block(s)", s.run.command).to_lowercase(),
        );
    }
    if lattice && s.run.command != Command::Verify {
        push(
            "run",
            0,
            "command",
            "run.command".into(),
            "lattice scenarios support the `verify` command only".into(),
        );
    }
    match s.run.command {
        Command::Evolve | Command::Orbit if s.run.initial.is_empty() => push(
            "run",
            0,
            "initial",
            "run.initial".into(),
            "initial values are required".into(),
        ),
        Command::Reduce | Command::Rrft if s.run.points.is_empty() => push(
            "run",
            0,
            "points",
            "run.points".into(),
            "at least one point is required".into(),
        ),
        _ => {}
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { issues })
    }
}

/// TOML text of a scenario.
pub fn serialize_scenario(s: &Scenario) -> String {
    toml::to_string(s).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "kepler"

[[frames]]
name = "phi"

[run]
command = "evolve"
initial = [2.0, -0.5]
"#;

    #[test]
    fn defaults_are_filled() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(
            s.model,
            ModelBlock::Kepler {
                m: 1.0,
                alpha: 1.0,
                energy: 0.5
            }
        );
        assert_eq!(s.frames[0].clock, Some(GaugeClock::linear(0.0, 1.0)));
        assert_eq!(s.run.frame.as_deref(), Some("phi"));
        assert_eq!(s.run.samples, 11);
        assert_eq!(s.numerics.rtol, 1e-10);
    }

    #[test]
    fn round_trip() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&serialize_scenario(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unknown_kind_is_named() {
        let e = parse_scenario("[model]\nkind = \"pendulum\"\n").unwrap_err();
        assert!(e.mentions("model.kind"));
        assert_eq!(e.issues[0].line, Some(2));
    }

    #[test]
    fn constant_clock_rejected() {
        let text = MINIMAL.replace(
            "name = \"phi\"",
            "name = \"phi\"\nclock = { kind = \"linear\", offset = 1.0, rate = 0.0 }",
        );
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.mentions("frames[0].clock"), "{e}");
        assert!(e.issues[0].line.is_some());
    }

    #[test]
    fn unknown_field_located() {
        let text = MINIMAL.replace("[run]", "[run]\nbogus = 3");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.issues[0].line.is_some(), "{e}");
    }

    #[test]
    fn seed_must_fit_toml_integer() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.numerics.seed = u64::MAX;
        assert!(validate(&s).unwrap_err().mentions("numerics.seed"));
    }

    #[test]
    fn syntax_error_has_line() {
        let e = parse_scenario("[model]\nkind = \n").unwrap_err();
        assert_eq!(e.issues[0].field, "<syntax>");
        assert!(e.issues[0].line.is_some());
    }
}
