//! Scenario execution: builds the model and frames, runs one command and
//! writes its artifacts.
//!
//! | command  | artifact           |
//! |----------|--------------------|
//! | `reduce` | `observables.csv`  |
//! | `evolve` | `trajectory.csv`   |
//! | `rrft`   | `rrft.json`        |
//! | `orbit`  | `orbit.csv`        |
//! | `verify` | `report.json`      |
//!
//! Exit codes: 0 success, 1 failed verification, 2 configuration or I/O
//! error, 3 numerical-domain error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::error::GaugeError;
use crate::flow::{flow_to_cut, trace_orbit};
use crate::gauge::{constraint_residual, GaugeClock, GaugeFrame, Sign};
use crate::models::energy::frame_name;
use crate::models::kepler::{ANGULAR_FRAME, RADIAL_FRAME};
use crate::models::particle::{SPACE_FRAME, TIME_FRAME};
use crate::models::toy::{Q_FRAME, X_FRAME};
use crate::models::{
    make_energy_constrained, make_kepler, make_lattice_pft, make_linear_toy, make_relativistic_particle,
    EnergyConstrained, Kepler, KeplerParams, LatticePft, LatticePftParams, LinearToy, ModelSystem,
    RelativisticParticle, RelativisticParticleParams,
};
use crate::relational::{evolve_geometric_samples, evolve_hamiltonian, reduced_hamiltonian};
use crate::report::{CheckEntry, VerificationReport};
use crate::rrft::{apply_rrft, pullback_hamiltonian, FrameMap, FramePair};
use crate::scenario::{validate, Command, ConfigError, FrameBlock, ModelBlock, Route, Scenario};
use crate::verify::{self, Packet, SuiteOptions};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numeric(#[from] GaugeError),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 2,
            RunError::Numeric(GaugeError::InvalidArgument(_)) | RunError::Numeric(GaugeError::Dimension(_)) => 2,
            RunError::Numeric(_) => 3,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub report: Option<VerificationReport>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match &self.report {
            Some(r) if !r.pass => 1,
            _ => 0,
        }
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub output: Option<PathBuf>,
    pub command: Option<String>,
}

/// Applies `--tol` and `--command` and revalidates.
pub fn apply_overrides(s: &mut Scenario, o: &Overrides) -> Result<(), ConfigError> {
    if let Some(tol) = o.tol {
        s.numerics.tol = Some(tol);
    }
    if let Some(c) = &o.command {
        s.run.command = Command::parse(c).ok_or_else(|| {
            ConfigError::single(
                "--command",
                format!("unknown command `{c}`, expected reduce, evolve, rrft, orbit or verify"),
            )
        })?;
    }
    validate(s)
}

/// A constructed model of any kind.
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Particle(RelativisticParticle),
    Kepler(Kepler),
    Toy(LinearToy),
    Energy(EnergyConstrained),
    Lattice(LatticePft),
}

impl BuiltModel {
    pub fn system(&self) -> &ModelSystem {
        match self {
            BuiltModel::Particle(m) => &m.model,
            BuiltModel::Kepler(m) => &m.model,
            BuiltModel::Toy(m) => &m.model,
            BuiltModel::Energy(m) => &m.model,
            BuiltModel::Lattice(m) => &m.model,
        }
    }
}

fn clock_of(s: &Scenario, name: &str) -> Option<GaugeClock> {
    s.frames.iter().find(|f| f.name == name).and_then(|f| f.clock.clone())
}

pub fn build_model(s: &Scenario) -> Result<BuiltModel, RunError> {
    build_model_block(&s.model, |name| clock_of(s, name))
}

/// Builds the model of `block`; `clock` looks up declared frame clocks,
/// which only the toy bakes into the model.
pub fn build_model_block(
    block: &ModelBlock,
    clock: impl Fn(&str) -> Option<GaugeClock>,
) -> Result<BuiltModel, RunError> {
    Ok(match block {
        ModelBlock::Particle { d, m } => {
            BuiltModel::Particle(make_relativistic_particle(RelativisticParticleParams { d: *d, m: *m })?)
        }
        ModelBlock::Kepler { m, alpha, energy } => BuiltModel::Kepler(make_kepler(KeplerParams {
            m: *m,
            alpha: *alpha,
            energy: *energy,
        })?),
        ModelBlock::Toy {} => BuiltModel::Toy(make_linear_toy(
            clock(X_FRAME).unwrap_or(GaugeClock::linear(0.0, 1.0)),
            clock(Q_FRAME).unwrap_or(GaugeClock::linear(0.0, 1.0)),
        )),
        ModelBlock::Energy {
            dim,
            metric,
            potential,
            energy,
            branch,
        } => {
            let frames: Vec<(usize, Sign)> = branch.iter().map(|b| (b.slot, b.sign)).collect();
            BuiltModel::Energy(make_energy_constrained(*dim, metric.clone(), potential.clone(), *energy, &frames)?)
        }
        ModelBlock::Lattice { d, n, dz, mu } => BuiltModel::Lattice(make_lattice_pft(LatticePftParams {
            d: *d,
            n: *n,
            dz: *dz,
            mu: *mu,
        })?),
    })
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn build_frame(model: &BuiltModel, block: &FrameBlock) -> Result<GaugeFrame, RunError> {
    match model {
        BuiltModel::Lattice(lat) => {
            let mut l = lat.boost(block.rapidity.unwrap_or(0.0));
            if let Some(angle) = block.angle {
                l = matmul(&lat.rotation(angle)?, &l);
            }
            Ok(lat.inertial_frame(&l)?)
        }
        other => {
            let clock = block.clock.clone().unwrap_or(GaugeClock::linear(0.0, 1.0));
            Ok(other.system().frame(&block.name, vec![clock])?)
        }
    }
}

fn frame_named(s: &Scenario, model: &BuiltModel, name: &str) -> Result<GaugeFrame, RunError> {
    let block = s
        .frames
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| ConfigError::single("run.frame", format!("frame `{name}` is not declared")))?;
    build_frame(model, block)
}

/// The declared frame called `name`, or the model frame with `default`.
fn frame_or(s: &Scenario, model: &BuiltModel, name: &str, default: GaugeClock) -> Result<GaugeFrame, RunError> {
    if s.frames.iter().any(|f| f.name == name) {
        frame_named(s, model, name)
    } else {
        Ok(model.system().frame(name, vec![default])?)
    }
}

fn source_frame(s: &Scenario, model: &BuiltModel) -> Result<GaugeFrame, RunError> {
    let name = s
        .run
        .frame
        .clone()
        .ok_or_else(|| ConfigError::single("run.frame", "no frame declared"))?;
    frame_named(s, model, &name)
}

/// `{:.16e}`: 17 significant digits, enough to round-trip binary64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = String>) {
    let row: Vec<String> = values.into_iter().collect();
    let _ = writeln!(out, "{}", row.join(","));
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| io_err(&path, e))?;
    info!("wrote {}", path.display());
    Ok(path)
}

/// Runs the scenario's command and writes its artifacts into `output`.
pub fn run(s: &Scenario, output: &Path) -> Result<RunOutcome, RunError> {
    validate(s)?;
    let model = build_model(s)?;
    info!("model `{}`, command {:?}", model.system().name, s.run.command);
    match s.run.command {
        Command::Reduce => {
            let p = write_artifact(output, "observables.csv", &reduce_csv(s, &model)?)?;
            Ok(RunOutcome {
                artifacts: vec![p],
                report: None,
            })
        }
        Command::Evolve => {
            let p = write_artifact(output, "trajectory.csv", &evolve_csv(s, &model)?)?;
            Ok(RunOutcome {
                artifacts: vec![p],
                report: None,
            })
        }
        Command::Rrft => {
            let p = write_artifact(output, "rrft.json", &rrft_json(s, &model)?)?;
            Ok(RunOutcome {
                artifacts: vec![p],
                report: None,
            })
        }
        Command::Orbit => {
            let p = write_artifact(output, "orbit.csv", &orbit_csv(s, &model)?)?;
            Ok(RunOutcome {
                artifacts: vec![p],
                report: None,
            })
        }
        Command::Verify => {
            let report = verification_report(s, &model)?;
            for c in &report.checks {
                info!(
                    "{} {}: {:e} (tolerance {:e}, {} samples)",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.max_error,
                    c.tolerance,
                    c.samples
                );
            }
            let p = write_artifact(output, "report.json", &report.to_json())?;
            Ok(RunOutcome {
                artifacts: vec![p],
                report: Some(report),
            })
        }
    }
}

/// Observables at `t0` of every point, plus the reduced Hamiltonian there.
pub fn reduce_csv(s: &Scenario, model: &BuiltModel) -> Result<String, RunError> {
    let frame = source_frame(s, model)?;
    let split = frame.split().clone();
    let n_true = split.n_true();
    let partial = 2 * n_true + split.n_gauge();
    let opts = s.numerics.flow_options();
    let mut out = String::new();
    let mut header = vec!["point".to_string()];
    header.extend(split.labels()[..2 * n_true].iter().map(|l| format!("O_{l}")));
    header.push("h_s".into());
    csv_row(&mut out, header);
    for (i, p) in s.run.points.iter().enumerate() {
        if p.len() != partial {
            return Err(ConfigError::single(
                format!("run.points[{i}]"),
                format!("frame `{}` needs {partial} values (true sector and references), got {}", frame.name(), p.len()),
            )
            .into());
        }
        let mut z = p.clone();
        z.extend(std::iter::repeat_n(0.0, split.n_gauge()));
        let z = frame.complete(&z)?;
        let image = flow_to_cut(&frame, s.run.t0, &z, &opts)?;
        let obs = frame.project(&image);
        let h = reduced_hamiltonian(&frame, s.run.t0, &obs)?;
        let mut row = vec![i.to_string()];
        row.extend(obs.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(h));
        csv_row(&mut out, row);
    }
    Ok(out)
}

fn check_initial(frame: &GaugeFrame, initial: &[f64]) -> Result<(), RunError> {
    let n = 2 * frame.split().n_true();
    if initial.len() != n {
        return Err(ConfigError::single(
            "run.initial",
            format!("frame `{}` needs {n} true-sector values, got {}", frame.name(), initial.len()),
        )
        .into());
    }
    Ok(())
}

pub fn evolve_csv(s: &Scenario, model: &BuiltModel) -> Result<String, RunError> {
    let frame = source_frame(s, model)?;
    check_initial(&frame, &s.run.initial)?;
    let opts = s.numerics.flow_options();
    let r = &s.run;
    let traj = match r.route {
        Route::Hamiltonian => evolve_hamiltonian(&frame, &r.initial, r.t0, r.t1, r.samples, &opts)?,
        Route::Geometric => evolve_geometric_samples(&frame, &r.initial, r.t0, r.t1, r.samples, &opts)?,
    };
    debug!("evolved {} samples", traj.states.len());
    let mut out = String::new();
    csv_row(&mut out, std::iter::once("t".to_string()).chain(traj.labels.iter().cloned()));
    for (t, state) in traj.times.iter().zip(&traj.states) {
        csv_row(&mut out, std::iter::once(fmt_f64(*t)).chain(state.iter().map(|v| fmt_f64(*v))));
    }
    Ok(out)
}

/// One record of the `rrft` artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RrftRecord {
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    pub h_a: f64,
    pub h_b_pullback: f64,
    pub abs_diff: f64,
}

pub fn rrft_records(s: &Scenario, model: &BuiltModel) -> Result<Vec<RrftRecord>, RunError> {
    let source = source_frame(s, model)?;
    let target_name = s
        .run
        .target
        .clone()
        .ok_or_else(|| ConfigError::single("run.target", "rrft needs a target frame"))?;
    let target = frame_named(s, model, &target_name)?;
    let pair = Arc::new(FramePair::new(source.clone(), target)?);
    let map = FrameMap::new(pair, s.run.t0, s.run.t_hat).with_options(s.numerics.flow_options());
    let mut records = Vec::with_capacity(s.run.points.len());
    for p in &s.run.points {
        check_initial(&source, p)?;
        let image = apply_rrft(&map, p)?;
        let pb = pullback_hamiltonian(&map, p)?;
        records.push(RrftRecord {
            point: p.clone(),
            image,
            h_a: pb.h_a,
            h_b_pullback: pb.h_b_pullback,
            abs_diff: pb.abs_diff(),
        });
    }
    Ok(records)
}

fn rrft_json(s: &Scenario, model: &BuiltModel) -> Result<String, RunError> {
    let records = rrft_records(s, model)?;
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    Ok(text)
}

/// Orbit samples `(s, z, residual)` plus one marker row per requested cut,
/// ordered by `s`. Marker rows carry `cut = 1` and the cut parameter `t`.
pub fn orbit_csv(s: &Scenario, model: &BuiltModel) -> Result<String, RunError> {
    let frame = source_frame(s, model)?;
    check_initial(&frame, &s.run.initial)?;
    let opts = s.numerics.flow_options();
    let z0 = frame.embed(s.run.t0, &s.run.initial)?;
    let [a, b] = s.run.s_range;
    let trace = trace_orbit(&frame, &z0, (a, b), s.run.samples, &opts)?;
    if let Some(e) = &trace.truncated {
        warn!("orbit stopped after {} samples: {e}", trace.samples.len());
    }
    let split = frame.split();
    let xi = split.x(frame.active_index());

    // (s, coordinates, residual, cut flag, cut parameter)
    let mut rows: Vec<(f64, Vec<f64>, f64, bool, f64)> = trace
        .samples
        .iter()
        .zip(&trace.residuals)
        .map(|((sv, z), r)| (*sv, z.coords().to_vec(), *r, false, f64::NAN))
        .collect();
    for &t in &s.run.cuts {
        let landed = flow_to_cut(&frame, t, &z0, &opts)?;
        // The unit flow moves the reference field at unit speed.
        let s_cut = landed[xi] - z0[xi];
        let res = constraint_residual(frame.constraints(), &landed)?;
        rows.push((s_cut, landed.coords().to_vec(), res, true, t));
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.3.cmp(&y.3)));

    let mut out = String::new();
    let mut header = vec!["s".to_string()];
    header.extend(split.labels().iter().cloned());
    header.extend(["residual".to_string(), "cut".to_string(), "t".to_string()]);
    csv_row(&mut out, header);
    for (sv, z, r, cut, t) in rows {
        let mut row = vec![fmt_f64(sv)];
        row.extend(z.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(r));
        row.push(if cut { "1".into() } else { "0".into() });
        row.push(if cut { fmt_f64(t) } else { String::new() });
        csv_row(&mut out, row);
    }
    Ok(out)
}

fn suite_options(s: &Scenario) -> SuiteOptions {
    SuiteOptions {
        points: s.numerics.points,
        seed: s.numerics.seed,
        opts: s.numerics.flow_options(),
        fd_step: s.numerics.fd_step,
        tol: s.numerics.tol,
        t: s.run.t0,
        t_hat: s.run.t_hat,
    }
}

/// Lattice boost parameter used by `verify`.
pub const VERIFY_RAPIDITY: f64 = 0.1;

pub fn verification_report(s: &Scenario, model: &BuiltModel) -> Result<VerificationReport, RunError> {
    let so = suite_options(s);
    let unit = || GaugeClock::linear(0.0, 1.0);
    let checks: Vec<CheckEntry> = match model {
        BuiltModel::Particle(p) => {
            let a = frame_or(s, model, TIME_FRAME, unit())?;
            let b = frame_or(s, model, SPACE_FRAME, unit())?;
            verify::particle_checks(p, &a, &b, &so)?
        }
        BuiltModel::Kepler(k) => {
            let a = frame_or(s, model, ANGULAR_FRAME, unit())?;
            let b = frame_or(s, model, RADIAL_FRAME, GaugeClock::linear(2.0, 1.0))?;
            verify::kepler_checks(k, &a, &b, &so)?
        }
        BuiltModel::Toy(t) => {
            let a = frame_or(s, model, X_FRAME, unit())?;
            let b = frame_or(s, model, Q_FRAME, unit())?;
            verify::toy_checks(t, &a, &b, &so)?
        }
        BuiltModel::Energy(e) => {
            let mut out = Vec::new();
            let names: Vec<String> = match &s.model {
                ModelBlock::Energy { branch, .. } => branch.iter().map(|b| frame_name(b.slot)).collect(),
                _ => unreachable!("model block matches the built model"),
            };
            for name in names {
                let frame = frame_or(s, model, &name, unit())?;
                for mut c in verify::energy_checks(e, &frame, &so)? {
                    c.name = format!("{name}/{}", c.name);
                    out.push(c);
                }
            }
            out
        }
        BuiltModel::Lattice(l) => verify::lattice_checks(l, &Packet::default(), VERIFY_RAPIDITY, &so)?,
    };
    Ok(VerificationReport::new(checks))
}

/// Reads, overrides, runs; returns the process exit code. Errors are
/// reported on stderr.
pub fn run_cli(config: &Path, overrides: &Overrides) -> i32 {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}", io_err(config, e));
            return 2;
        }
    };
    let mut scenario = match crate::scenario::parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Err(e) = apply_overrides(&mut scenario, overrides) {
        eprintln!("error: {e}");
        return 2;
    }
    let output = overrides
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(&scenario.run.output));
    match run(&scenario, &output) {
        Ok(outcome) => {
            if let Some(r) = &outcome.report {
                for c in &r.checks {
                    println!(
                        "{} {} max_error={:e} tolerance={:e}",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.name,
                        c.max_error,
                        c.tolerance
                    );
                }
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
