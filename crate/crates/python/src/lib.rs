//! Python bindings for `rhomu-core`.
//!
//! Exact rationals come back as `fractions.Fraction`, infinite gains as
//! `float("inf")`, and structured reports as plain dicts.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;
use serde::Serialize;

use rhomu_core::codec::{self, CodecTable, Disturbance};
use rhomu_core::construct::{self, Abstraction, OutputPolicy};
use rhomu_core::gain::{self, CostWeights};
use rhomu_core::plant::{bundled, FinitePlant};
use rhomu_core::rational::{self, Extended, Rational};
use rhomu_core::synth::{self, ControllerDfm};
use rhomu_core::verify::{self, Scope};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fraction<'py>(py: Python<'py>, value: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((rational::format(value),))
}

fn extended<'py>(py: Python<'py>, value: &Extended) -> PyResult<Bound<'py, PyAny>> {
    match value {
        Extended::Finite(v) => fraction(py, v),
        Extended::Infinite => Ok(f64::INFINITY.into_pyobject(py)?.into_any()),
    }
}

/// Round-trips through JSON so that reports keep their serde field names.
fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.getattr("loads")?.call1((text,))
}

fn weights_for(labels: &[String], outputs: usize, weights: Option<&str>) -> PyResult<CostWeights> {
    match weights {
        Some(text) => CostWeights::parse(text, labels, outputs).map_err(value_error),
        None => Ok(CostWeights::defaults(labels.len(), outputs)),
    }
}

fn label_index(labels: &[String], label: &str, what: &str) -> PyResult<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| PyKeyError::new_err(format!("unknown {what} `{label}`")))
}

#[pyclass(name = "Plant", module = "rhomu", frozen)]
struct PyPlant {
    inner: FinitePlant,
}

#[pymethods]
impl PyPlant {
    /// Loads one of the bundled plants (`EX1`, `EX2`, `EX3`).
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        bundled::load(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyKeyError::new_err(format!("no bundled plant `{name}`")))
    }

    #[staticmethod]
    fn bundled_names() -> Vec<&'static str> {
        bundled::names().to_vec()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        text.parse().map(|inner| Self { inner }).map_err(value_error)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.state_labels().to_vec()
    }

    #[getter]
    fn inputs(&self) -> Vec<String> {
        self.inner.input_labels().to_vec()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.inner.output_labels().to_vec()
    }

    /// `[(x, y, mu(v))]` for `len(inputs) + 1` steps; labels, not indices.
    fn simulate<'py>(&self, py: Python<'py>, x0: &str, inputs: Vec<String>) -> PyResult<Bound<'py, PyList>> {
        let plant = &self.inner;
        let x0 = label_index(plant.state_labels(), x0, "state")?;
        let inputs = inputs
            .iter()
            .map(|u| label_index(plant.input_labels(), u, "input"))
            .collect::<PyResult<Vec<_>>>()?;
        let trace = plant.simulate(x0, &inputs);
        let rows = trace
            .records
            .iter()
            .map(|r| {
                let cost = plant.mu(&r.v).cloned().unwrap_or_else(rational::zero);
                Ok((
                    plant.state_labels()[r.x].clone(),
                    plant.output_labels()[r.y].clone(),
                    fraction(py, &cost)?,
                ))
            })
            .collect::<PyResult<Vec<_>>>()?;
        PyList::new(py, rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Plant({:?}, states={}, inputs={}, outputs={})",
            self.inner.name(),
            self.inner.num_states(),
            self.inner.num_inputs(),
            self.inner.num_outputs()
        )
    }
}

#[pyclass(name = "Abstraction", module = "rhomu", frozen)]
struct PyAbstraction {
    inner: Abstraction,
}

#[pymethods]
impl PyAbstraction {
    /// Window-`window` abstraction with lexicographic predictions.
    #[staticmethod]
    fn build(plant: &PyPlant, window: usize) -> PyResult<Self> {
        construct::build_abstraction(&plant.inner, window, OutputPolicy::Lexicographic)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Abstraction::from_json(text).map(|inner| Self { inner }).map_err(value_error)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn state_label(&self, q: usize) -> PyResult<String> {
        self.check_state(q)?;
        Ok(self.inner.state_label(q))
    }

    /// Successor of `q` after applying `u` and observing `y`.
    fn next(&self, q: usize, u: &str, y: &str) -> PyResult<usize> {
        self.check_state(q)?;
        let u = label_index(self.inner.input_labels(), u, "input")?;
        let y = label_index(self.inner.output_labels(), y, "output")?;
        Ok(self.inner.next(q, u, y))
    }

    fn prediction(&self, q: usize) -> PyResult<String> {
        self.check_state(q)?;
        Ok(self.inner.output_labels()[self.inner.state(q).prediction].clone())
    }

    fn is_ambiguous(&self, q: usize) -> PyResult<bool> {
        self.check_state(q)?;
        Ok(self.inner.state(q).is_ambiguous())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Abstraction({:?}, window={}, states={})",
            self.inner.plant_name(),
            self.inner.window(),
            self.inner.num_states()
        )
    }
}

impl PyAbstraction {
    fn check_state(&self, q: usize) -> PyResult<()> {
        if q < self.inner.num_states() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("no abstract state {q}")))
        }
    }
}

/// Output-nested levels `1..=max_window` and the nesting report.
#[pyfunction]
fn nested_sequence<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    max_window: usize,
) -> PyResult<(Vec<PyAbstraction>, Bound<'py, PyAny>)> {
    let seq = construct::build_nested_sequence(&plant.inner, max_window).map_err(value_error)?;
    let report = to_python(py, &seq.report)?;
    Ok((seq.levels.into_iter().map(|inner| PyAbstraction { inner }).collect(), report))
}

/// Outputs are 1-based, disturbances 0-based.
#[pyfunction]
fn beta(ytilde: usize, y: usize, p: usize) -> PyResult<usize> {
    codec::beta(ytilde, y, p).map(|Disturbance(w)| w).map_err(value_error)
}

#[pyfunction]
fn alpha(ytilde: usize, w: usize, p: usize) -> PyResult<Option<usize>> {
    codec::alpha(ytilde, Disturbance(w), p).map_err(value_error)
}

#[pyfunction]
fn codec_minimality<'py>(py: Python<'py>, p: usize) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &codec::verify_minimality(p).map_err(value_error)?)
}

/// Exact error gain of `m` against `plant`.
#[pyfunction]
#[pyo3(signature = (plant, m, weights=None))]
fn error_gain<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    m: &PyAbstraction,
    weights: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let plant = &plant.inner;
    let w = weights_for(plant.input_labels(), plant.num_outputs(), weights)?;
    let result = gain::error_gain(plant, &m.inner, &w).map_err(value_error)?;
    extended(py, &result.gamma)
}

/// Plant-free upper bound on the error gain.
#[pyfunction]
#[pyo3(signature = (m, weights=None))]
fn gain_upper_bound<'py>(py: Python<'py>, m: &PyAbstraction, weights: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let m = &m.inner;
    let w = weights_for(m.input_labels(), m.num_outputs(), weights)?;
    extended(py, &gain::gain_upper_bound(m, &w).map_err(value_error)?.gamma)
}

#[pyfunction]
#[pyo3(signature = (m, weights=None))]
fn zero_reduction_finite(m: &PyAbstraction, weights: Option<&str>) -> PyResult<bool> {
    let m = &m.inner;
    let w = weights_for(m.input_labels(), m.num_outputs(), weights)?;
    Ok(gain::zero_reduction_finite(m, &w).map_err(value_error)?.finite)
}

#[pyfunction]
#[pyo3(signature = (plant, m, depth=None))]
fn check_output_match<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    m: &PyAbstraction,
    depth: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let codec = CodecTable::minimal(plant.inner.num_outputs()).map_err(value_error)?;
    let depth = depth.unwrap_or_else(|| verify::default_depth(m.inner.window()));
    to_python(py, &verify::check_output_match(&plant.inner, &m.inner, &codec, depth))
}

/// Exhaustive unless `depth` is given.
#[pyfunction]
#[pyo3(signature = (plant, m, depth=None))]
fn check_inclusion<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    m: &PyAbstraction,
    depth: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let scope = depth.map_or(Scope::Exhaustive, Scope::Depth);
    to_python(py, &verify::check_inclusion(&plant.inner, &m.inner, scope))
}

#[pyfunction]
fn check_performance_chain<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    coarse: &PyAbstraction,
    fine: &PyAbstraction,
) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &verify::check_performance_chain(&plant.inner, &coarse.inner, &fine.inner))
}

#[pyfunction]
fn check_output_nested<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    coarse: &PyAbstraction,
    fine: &PyAbstraction,
) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &verify::check_output_nested(&plant.inner, &coarse.inner, &fine.inner))
}

#[pyfunction]
#[pyo3(signature = (plant, levels, weights=None))]
fn check_gain_monotone<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    levels: Vec<PyRef<'py, PyAbstraction>>,
    weights: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let plant = &plant.inner;
    let w = weights_for(plant.input_labels(), plant.num_outputs(), weights)?;
    let levels: Vec<Abstraction> = levels.iter().map(|m| m.inner.clone()).collect();
    to_python(py, &verify::check_gain_monotone(plant, &levels, &w).map_err(value_error)?)
}

/// First window up to `max_window` whose error gain is zero.
#[pyfunction]
#[pyo3(signature = (plant, max_window=verify::DEFAULT_MAX_WINDOW, weights=None))]
fn check_completeness<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    max_window: usize,
    weights: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let plant = &plant.inner;
    let w = weights_for(plant.input_labels(), plant.num_outputs(), weights)?;
    to_python(py, &verify::check_completeness(plant, &w, max_window).map_err(value_error)?)
}

/// Synthesizes a controller on the last level of the nested sequence and
/// deploys it on the plant. `tau_grid` entries are rational strings.
#[pyfunction]
#[pyo3(signature = (plant, window, tau_grid=None, weights=None, horizon=200))]
fn synthesize<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    window: usize,
    tau_grid: Option<Vec<String>>,
    weights: Option<&str>,
    horizon: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let plant = &plant.inner;
    let w = weights_for(plant.input_labels(), plant.num_outputs(), weights)?;
    let grid = match tau_grid {
        None => synth::default_tau_grid(),
        Some(grid) => grid
            .iter()
            .map(|t| rational::parse(t).ok_or_else(|| PyValueError::new_err(format!("invalid tau `{t}`"))))
            .collect::<PyResult<Vec<_>>>()?,
    };
    let codec = CodecTable::minimal(plant.num_outputs()).map_err(value_error)?;
    let seq = construct::build_nested_sequence(plant, window).map_err(value_error)?;
    let m = seq.levels.last().expect("at least one level");
    let gamma = gain::error_gain(plant, m, &w).map_err(value_error)?.gamma;
    let synthesis = synth::search_tau(m, &codec, &w, &gamma, &grid).map_err(value_error)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("gamma", extended(py, &gamma)?)?;
    out.set_item("synthesis", to_python(py, &synthesis)?)?;
    if let Some(certificate) = &synthesis.certificate {
        let controller = ControllerDfm::new(m, &certificate.policy).map_err(value_error)?;
        let deploy = synth::deploy_and_check(plant, &controller, horizon);
        out.set_item("controller", to_python(py, &controller)?)?;
        out.set_item("deploy", to_python(py, &deploy)?)?;
    }
    Ok(out.into_any())
}

/// Runs the `rhomu` command line in-process; returns `(code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let outcome = rhomu_core::cli::run(std::iter::once("rhomu".to_string()).chain(args));
    (outcome.code, outcome.stdout, outcome.stderr)
}

#[pymodule]
fn rhomu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyAbstraction>()?;
    m.add_function(wrap_pyfunction!(nested_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(codec_minimality, m)?)?;
    m.add_function(wrap_pyfunction!(error_gain, m)?)?;
    m.add_function(wrap_pyfunction!(gain_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(zero_reduction_finite, m)?)?;
    m.add_function(wrap_pyfunction!(check_output_match, m)?)?;
    m.add_function(wrap_pyfunction!(check_inclusion, m)?)?;
    m.add_function(wrap_pyfunction!(check_performance_chain, m)?)?;
    m.add_function(wrap_pyfunction!(check_output_nested, m)?)?;
    m.add_function(wrap_pyfunction!(check_gain_monotone, m)?)?;
    m.add_function(wrap_pyfunction!(check_completeness, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
