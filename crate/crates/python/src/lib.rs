//! Python bindings: models, gauge frames, orbit flows, reduced dynamics,
//! reference frame maps and scenario runs.
//!
//! Coordinates cross the boundary as plain lists of floats laid out as in
//! the Rust crate, `(q…, p…, x…, y…)` for full points and `(q…, p…)` for
//! reduced ones.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};

use gaugeframe::flow::{flow_to_cut, trace_orbit, FlowOptions};
use gaugeframe::gauge::{GaugeClock, GaugeFrame};
use gaugeframe::phase::{CoordinateFunction, PhasePoint};
use gaugeframe::relational::{evaluate_observable, evolve_hamiltonian, reduced_hamiltonian, RelationalObservable};
use gaugeframe::report::CheckEntry;
use gaugeframe::rrft::{self, FramePair};
use gaugeframe::run::{self as runner, BuiltModel, RunError};
use gaugeframe::scenario::{self, ConfigError, FrameBlock, ModelBlock};

create_exception!(gaugeframe, GaugeError, PyException, "A numerical failure of the gauge engine.");
create_exception!(gaugeframe, ConfigurationError, PyValueError, "An invalid model or scenario description.");

fn gauge_err(e: gaugeframe::GaugeError) -> PyErr {
    GaugeError::new_err(e.to_string())
}

fn config_err(e: ConfigError) -> PyErr {
    ConfigurationError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Config(c) => config_err(c),
        RunError::Numeric(g) => gauge_err(g),
        other => PyIOError::new_err(other.to_string()),
    }
}

/// Python keyword values as TOML, so model parameters share the scenario
/// file's deserialisation and validation.
fn to_toml(obj: &Bound<'_, PyAny>) -> PyResult<toml::Value> {
    if obj.is_instance_of::<PyBool>() {
        Ok(toml::Value::Boolean(obj.extract()?))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(toml::Value::Integer(obj.extract()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(toml::Value::Float(obj.extract()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(toml::Value::String(obj.extract()?))
    } else if obj.is_instance_of::<PyDict>() {
        let mut table = toml::Table::new();
        for (k, v) in obj.extract::<Bound<'_, PyDict>>()?.iter() {
            table.insert(k.extract()?, to_toml(&v)?);
        }
        Ok(toml::Value::Table(table))
    } else if obj.is_instance_of::<PyList>() || obj.is_instance_of::<PyTuple>() {
        let items = obj.try_iter()?.map(|v| to_toml(&v?)).collect::<PyResult<_>>()?;
        Ok(toml::Value::Array(items))
    } else {
        Err(ConfigurationError::new_err(format!(
            "unsupported parameter value {}",
            obj.repr()?
        )))
    }
}

fn check_dict<'py>(py: Python<'py>, c: &CheckEntry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &c.name)?;
    d.set_item("max_error", c.max_error)?;
    d.set_item("tolerance", c.tolerance)?;
    d.set_item("pass", c.pass)?;
    d.set_item("samples", c.samples)?;
    Ok(d)
}

/// A constrained model: `Model("kepler", m=1.0, alpha=1.0, energy=0.5)`.
///
/// Parameters are those of the scenario file's `[model]` table.
#[pyclass(name = "Model", module = "gaugeframe", frozen)]
struct PyModel {
    block: ModelBlock,
    inner: BuiltModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (kind, **params))]
    fn new(kind: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut table = match params {
            Some(p) => match to_toml(p.as_any())? {
                toml::Value::Table(t) => t,
                _ => unreachable!("a dict converts to a table"),
            },
            None => toml::Table::new(),
        };
        table.insert("kind".into(), toml::Value::String(kind.into()));
        let block: ModelBlock = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigurationError::new_err(e.message().to_string()))?;
        // Parameter checks surface as configuration errors, as on the CLI.
        let inner = runner::build_model_block(&block, |_| None).map_err(|e| match e.exit_code() {
            2 => ConfigurationError::new_err(e.to_string()),
            _ => run_err(e),
        })?;
        Ok(Self { block, inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.block.kind()
    }

    /// Names of the frames the model provides.
    fn frame_names(&self) -> Vec<String> {
        self.block.frame_names()
    }

    /// Kinematic coordinate labels.
    fn labels(&self) -> Vec<String> {
        self.inner.system().kinematic_labels.clone()
    }

    /// A gauge frame with clock `k(t) = offset + rate·t`, or the polynomial
    /// clock `Σ cₙtⁿ` when `coefficients` is given. Lattice frames take a
    /// Lorentz transformation instead of a clock.
    #[pyo3(signature = (name, offset=0.0, rate=1.0, coefficients=None, rapidity=None, angle=None))]
    fn frame(
        &self,
        name: &str,
        offset: f64,
        rate: f64,
        coefficients: Option<Vec<f64>>,
        rapidity: Option<f64>,
        angle: Option<f64>,
    ) -> PyResult<PyFrame> {
        let clock = match coefficients {
            Some(c) => GaugeClock::Polynomial { coefficients: c },
            None => GaugeClock::linear(offset, rate),
        };
        let block = FrameBlock {
            name: name.into(),
            clock: Some(clock),
            rapidity,
            angle,
        };
        let frame = runner::build_frame(&self.inner, &block).map_err(run_err)?;
        Ok(PyFrame {
            frame,
            opts: FlowOptions::default(),
        })
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.block)
    }
}

/// A gauge frame: constraint system plus clocks.
#[pyclass(name = "Frame", module = "gaugeframe", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFrame {
    frame: GaugeFrame,
    opts: FlowOptions,
}

impl PyFrame {
    fn point(&self, z: Vec<f64>) -> PyResult<PhasePoint> {
        PhasePoint::new(self.frame.split().clone(), z).map_err(gauge_err)
    }
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn name(&self) -> String {
        self.frame.name().to_string()
    }

    /// Labels of the full phase space.
    fn labels(&self) -> Vec<String> {
        self.frame.split().labels().to_vec()
    }

    #[getter]
    fn n_true(&self) -> usize {
        self.frame.split().n_true()
    }

    /// Copy with integrator tolerances `rtol`, `atol`.
    fn with_tolerances(&self, rtol: f64, atol: f64) -> Self {
        Self {
            frame: self.frame.clone(),
            opts: FlowOptions::with_tolerances(rtol, atol),
        }
    }

    /// The clock values `k(t)`.
    fn k(&self, t: f64) -> Vec<f64> {
        self.frame.k(t)
    }

    /// The point of the cut at `t` with true coordinates `qp`.
    fn embed(&self, t: f64, qp: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.frame.embed(t, &qp).map_err(gauge_err)?.into_coords())
    }

    /// Solves the constraints for the momenta `y` of a full point.
    fn complete(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.frame.complete(&z).map_err(gauge_err)?.into_coords())
    }

    /// The true coordinates of a full point.
    fn project(&self, z: Vec<f64>) -> Vec<f64> {
        self.frame.project(&z)
    }

    /// Reduced Hamiltonian `h_s(q, p; t)`.
    fn reduced_hamiltonian(&self, t: f64, qp: Vec<f64>) -> PyResult<f64> {
        reduced_hamiltonian(&self.frame, t, &qp).map_err(gauge_err)
    }

    /// Flows `z` along its gauge orbit onto the cut at `t`.
    fn flow_to_cut(&self, t: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = self.point(z)?;
        Ok(flow_to_cut(&self.frame, t, &z, &self.opts).map_err(gauge_err)?.into_coords())
    }

    /// Relational observable of coordinate `label` at cut parameter `t`.
    fn observable(&self, label: &str, t: f64, z: Vec<f64>) -> PyResult<f64> {
        let base = CoordinateFunction::by_label(self.frame.split(), label).map_err(gauge_err)?;
        let obs = RelationalObservable::new(Arc::new(base), self.frame.clone(), t).with_options(self.opts.clone());
        evaluate_observable(&obs, &self.point(z)?).map_err(gauge_err)
    }

    /// Samples the gauge orbit through `z`: `(s, points, residuals)`.
    #[pyo3(signature = (z, s0, s1, samples))]
    fn orbit(&self, z: Vec<f64>, s0: f64, s1: f64, samples: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
        let trace = trace_orbit(&self.frame, &self.point(z)?, (s0, s1), samples, &self.opts).map_err(gauge_err)?;
        if let Some(e) = trace.truncated {
            return Err(gauge_err(e));
        }
        let (s, points) = trace.samples.into_iter().map(|(s, w)| (s, w.into_coords())).unzip();
        Ok((s, points, trace.residuals))
    }

    /// Reduced evolution from `qp0` at `t0` to `t1`: `(times, states)`.
    #[pyo3(signature = (qp0, t0, t1, samples))]
    fn evolve(&self, qp0: Vec<f64>, t0: f64, t1: f64, samples: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let traj = evolve_hamiltonian(&self.frame, &qp0, t0, t1, samples, &self.opts).map_err(gauge_err)?;
        Ok((traj.times, traj.states))
    }

    fn __repr__(&self) -> String {
        format!("Frame({:?}, clocks={:?})", self.frame.name(), self.frame.clocks())
    }
}

/// Relational reference frame transformation from `source` at `t` to
/// `target` at `t_hat`.
#[pyclass(name = "FrameMap", module = "gaugeframe", frozen)]
struct PyFrameMap {
    map: rrft::FrameMap,
}

#[pymethods]
impl PyFrameMap {
    #[new]
    fn new(source: &PyFrame, target: &PyFrame, t: f64, t_hat: f64) -> PyResult<Self> {
        let pair = FramePair::new(source.frame.clone(), target.frame.clone()).map_err(gauge_err)?;
        Ok(Self {
            map: rrft::FrameMap::new(Arc::new(pair), t, t_hat).with_options(source.opts.clone()),
        })
    }

    /// Image of the reduced point `qp`.
    fn apply(&self, qp: Vec<f64>) -> PyResult<Vec<f64>> {
        rrft::apply_rrft(&self.map, &qp).map_err(gauge_err)
    }

    /// The map in the opposite direction.
    fn inverse(&self) -> Self {
        Self {
            map: rrft::invert_rrft(&self.map),
        }
    }

    /// `(h_source(qp), h_target(image))`.
    fn hamiltonians(&self, qp: Vec<f64>) -> PyResult<(f64, f64)> {
        let pb = rrft::pullback_hamiltonian(&self.map, &qp).map_err(gauge_err)?;
        Ok((pb.h_a, pb.h_b_pullback))
    }
}

/// A scenario file: model, frames, command and numerics.
#[pyclass(name = "Scenario", module = "gaugeframe", frozen)]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::parse_scenario(text).map_err(config_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::new(&text)
    }

    fn to_toml(&self) -> String {
        scenario::serialize_scenario(&self.inner)
    }

    #[getter]
    fn command(&self) -> String {
        format!("{:?}", self.inner.run.command).to_lowercase()
    }

    fn model(&self) -> PyResult<PyModel> {
        let inner = runner::build_model(&self.inner).map_err(run_err)?;
        Ok(PyModel {
            block: self.inner.model.clone(),
            inner,
        })
    }

    /// Runs the invariant suite without writing artifacts.
    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let model = runner::build_model(&self.inner).map_err(run_err)?;
        let report = runner::verification_report(&self.inner, &model).map_err(run_err)?;
        report.checks.iter().map(|c| check_dict(py, c)).collect()
    }

    /// Runs the scenario's command, writing artifacts into `output`
    /// (default `run.output`). Returns the artifact paths and exit code.
    #[pyo3(signature = (output=None))]
    fn run(&self, output: Option<PathBuf>) -> PyResult<(Vec<PathBuf>, i32)> {
        let output = output.unwrap_or_else(|| PathBuf::from(&self.inner.run.output));
        let outcome = runner::run(&self.inner, &output).map_err(run_err)?;
        let code = outcome.exit_code();
        Ok((outcome.artifacts, code))
    }
}

#[pymodule]
#[pyo3(name = "gaugeframe")]
fn gaugeframe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyFrameMap>()?;
    m.add_class::<PyScenario>()?;
    m.add("GaugeError", m.py().get_type::<GaugeError>())?;
    m.add("ConfigurationError", m.py().get_type::<ConfigurationError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
