//! Python bindings for the two-stage coder.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use twopart::bitcode::{elias_decode, elias_encode, BitString};
use twopart::distance::{variational_exact_1d, variational_mc};
use twopart::harness::{
    run_identification_experiment, run_invariant_suite, run_redundancy_experiment, write_records, ExperimentConfig,
    InvariantSection,
};
use twopart::model::GaussianEmission;
use twopart::scheme::{delta_schedule, DeltaMode, SchemeConfig, TwoStageCoder};
use twopart::yatracos::vc_bound;
use twopart::{ParamVector, SampleBlock, SourceFamily};

fn py_err(e: twopart::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<DeltaMode> {
    mode.parse().map_err(|_| PyValueError::new_err(format!("unknown delta mode {mode:?}")))
}

/// A parametric source family.
#[pyclass(name = "Family", module = "twopart_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFamily {
    inner: SourceFamily,
}

#[pymethods]
impl PyFamily {
    #[staticmethod]
    fn gaussian_iid() -> Self {
        Self {
            inner: SourceFamily::gaussian_iid(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (order, mixing_rate, mixing_constant = 1.0))]
    fn gaussian_ar(order: usize, mixing_rate: f64, mixing_constant: f64) -> PyResult<Self> {
        Ok(Self {
            inner: SourceFamily::gaussian_ar(order, mixing_constant, mixing_rate).map_err(py_err)?,
        })
    }

    /// `emissions` is a list of `(mean, std)` pairs with a scalar or list mean.
    #[staticmethod]
    #[pyo3(signature = (floor, emissions, mixing_rate, mixing_constant = 1.0))]
    fn hmm(floor: f64, emissions: Vec<(Vec<f64>, f64)>, mixing_rate: f64, mixing_constant: f64) -> PyResult<Self> {
        let em = emissions
            .into_iter()
            .map(|(mean, std)| GaussianEmission { mean, std })
            .collect();
        Ok(Self {
            inner: SourceFamily::hmm(floor, em, mixing_constant, mixing_rate).map_err(py_err)?,
        })
    }

    #[getter]
    fn tag(&self) -> &'static str {
        self.inner.tag()
    }

    #[getter]
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn check(&self, theta: Vec<f64>) -> PyResult<()> {
        self.inner.check_param(&ParamVector::new(theta)).map_err(py_err)
    }

    /// Flat list of `n` letters drawn from the stationary law.
    fn sample(&self, theta: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let src = self.inner.prepare(&ParamVector::new(theta)).map_err(py_err)?;
        Ok(src.sample(n, seed).into_values())
    }

    fn log_density(&self, theta: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        let src = self.inner.prepare(&ParamVector::new(theta)).map_err(py_err)?;
        let block = SampleBlock::new(self.inner.letter_dim(), x).map_err(py_err)?;
        src.log_density(&block).map_err(py_err)
    }

    fn vc_bound(&self, n: usize) -> PyResult<f64> {
        Ok(vc_bound(&self.inner, n).map_err(py_err)?.value)
    }

    fn __repr__(&self) -> String {
        format!("Family({})", self.inner.tag())
    }
}

/// Encoder and decoder for one block length; both ends must share the settings.
#[pyclass(name = "Coder", module = "twopart_py", frozen)]
struct PyCoder {
    inner: TwoStageCoder,
}

#[pymethods]
impl PyCoder {
    #[new]
    #[pyo3(signature = (
        family, n, lambda_, seed = 0, database_seed = 1, delta_mode = "practical", c_delta = 1.0,
        candidate_count = 32, anchors = Vec::new(), planted = None, mde_mc_budget = 1000,
        distance_mc_budget = 300, training_blocks = 500, i_max = 10_000, l_cap = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        family: &PyFamily,
        n: usize,
        lambda_: f64,
        seed: u64,
        database_seed: u64,
        delta_mode: &str,
        c_delta: f64,
        candidate_count: usize,
        anchors: Vec<Vec<f64>>,
        planted: Option<Vec<f64>>,
        mde_mc_budget: usize,
        distance_mc_budget: usize,
        training_blocks: usize,
        i_max: u64,
        l_cap: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg = SchemeConfig::for_family(&family.inner, n, lambda_);
        cfg.seed = seed;
        cfg.database_seed = database_seed;
        cfg.delta_mode = parse_mode(delta_mode)?;
        cfg.c_delta = c_delta;
        cfg.candidate_count = candidate_count;
        cfg.anchors = anchors.into_iter().map(ParamVector::new).collect();
        cfg.planted = planted.map(ParamVector::new);
        cfg.mde_mc_budget = mde_mc_budget;
        cfg.distance_mc_budget = distance_mc_budget;
        cfg.training_blocks = training_blocks;
        cfg.i_max = i_max;
        cfg.l_cap = l_cap;
        Ok(Self {
            inner: TwoStageCoder::new(&family.inner, cfg).map_err(py_err)?,
        })
    }

    /// Letters of past data the encoder expects.
    #[getter]
    fn history_length(&self) -> usize {
        self.inner.layout().m_n
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.tolerance()
    }

    /// Returns `(bits, database_index, theta_hat, reproduction)`; bits is a 0/1 string.
    fn encode(&self, history: Vec<f64>, current: Vec<f64>) -> PyResult<(String, u64, Vec<f64>, Vec<f64>)> {
        let dim = self.inner.family().letter_dim();
        let h = SampleBlock::new(dim, history).map_err(py_err)?;
        let x = SampleBlock::new(dim, current).map_err(py_err)?;
        let enc = self.inner.encode(&h, &x).map_err(py_err)?;
        Ok((
            enc.block.to_bits().to_string(),
            enc.database_index,
            enc.theta_hat.coords().to_vec(),
            enc.reproduction.into_values(),
        ))
    }

    /// Returns `(reproduction, theta_hat, database_index)`.
    fn decode(&self, bits: &str) -> PyResult<(Vec<f64>, Vec<f64>, u64)> {
        let stream = BitString::parse(bits).map_err(py_err)?;
        let d = self.inner.decode(&stream).map_err(py_err)?;
        Ok((d.reproduction.into_values(), d.theta_hat.coords().to_vec(), d.database_index))
    }
}

#[pyfunction(name = "elias_encode")]
fn py_elias_encode(i: u64) -> PyResult<String> {
    Ok(elias_encode(i).map_err(py_err)?.to_string())
}

/// Decode a 0/1 string holding a sequence of Elias gamma codewords.
#[pyfunction(name = "elias_decode_all")]
fn py_elias_decode_all(bits: &str) -> PyResult<Vec<u64>> {
    let stream = BitString::parse(bits).map_err(py_err)?;
    let mut out = Vec::new();
    let mut cursor = 0;
    while cursor < stream.len() {
        let (v, next) = elias_decode(&stream, cursor).map_err(py_err)?;
        out.push(v);
        cursor = next;
    }
    Ok(out)
}

#[pyfunction]
fn variational_exact(theta: Vec<f64>, other: Vec<f64>) -> PyResult<f64> {
    let fam = SourceFamily::gaussian_iid();
    Ok(variational_exact_1d(&fam, &ParamVector::new(theta), &ParamVector::new(other))
        .map_err(py_err)?
        .value)
}

/// Monte-Carlo estimate of `d_n`; returns `(value, standard_error)`.
#[pyfunction]
fn variational_estimate(
    family: &PyFamily,
    theta: Vec<f64>,
    other: Vec<f64>,
    n: usize,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let d = variational_mc(&family.inner, &ParamVector::new(theta), &ParamVector::new(other), n, samples, seed)
        .map_err(py_err)?;
    Ok((d.value, d.standard_error))
}

#[pyfunction(name = "delta_schedule")]
fn py_delta_schedule(n: usize, v: f64, mode: &str, c_delta: f64) -> PyResult<f64> {
    delta_schedule(n, v, parse_mode(mode)?, c_delta).map_err(py_err)
}

/// Run the invariant suite; returns `(passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (seed = 7, inject_corruption = false))]
fn run_invariants(py: Python<'_>, seed: u64, inject_corruption: bool) -> (bool, String) {
    let section = InvariantSection { seed, inject_corruption };
    let report = py.detach(|| run_invariant_suite(&section));
    (report.passed(), report.render())
}

/// Run an experiment from TOML text; returns the CSV records as text.
#[pyfunction]
#[pyo3(signature = (config_toml, kind = "redundancy"))]
fn run_experiment(py: Python<'_>, config_toml: &str, kind: &str) -> PyResult<String> {
    let config = ExperimentConfig::parse(config_toml).map_err(py_err)?;
    let out = py
        .detach(|| match kind {
            "redundancy" => run_redundancy_experiment(&config),
            "identify" => run_identification_experiment(&config),
            other => Err(twopart::Error::InvalidConfig(format!("unknown experiment kind {other:?}"))),
        })
        .map_err(py_err)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &out.records, false).map_err(py_err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn twopart_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFamily>()?;
    m.add_class::<PyCoder>()?;
    m.add_function(wrap_pyfunction!(py_elias_encode, m)?)?;
    m.add_function(wrap_pyfunction!(py_elias_decode_all, m)?)?;
    m.add_function(wrap_pyfunction!(variational_exact, m)?)?;
    m.add_function(wrap_pyfunction!(variational_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(py_delta_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_invariants, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
