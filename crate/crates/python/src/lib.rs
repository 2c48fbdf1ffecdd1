//! Python bindings: `import qmfilter`.

use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use qmf_core::amplify;
use qmf_core::bank::{BankSpec, ChirpParams, TemplateIndex};
use qmf_core::cw::{self, CwSearchSpec};
use qmf_core::dsp::{self, Psd, TimeSeries};
use qmf_core::pipeline::{self, MatchedFilterOracle, McConfig, OracleCounter, RetrievalStrategy};
use qmf_core::qsim::{self, StringOracleSpec};

fn py_err(e: qmf_core::Error) -> PyErr {
    match e {
        qmf_core::Error::ResourceCap { .. } => PyMemoryError::new_err(e.to_string()),
        qmf_core::Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so nested results arrive as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn strategy(name: &str) -> PyResult<RetrievalStrategy> {
    name.parse().map_err(py_err)
}

#[pyfunction]
fn theta_of(n: u64, r: u64) -> PyResult<f64> {
    amplify::theta_of(n, r).map_err(py_err)
}

#[pyfunction]
fn p_match(theta: f64, k: u64) -> f64 {
    amplify::p_match(theta, k)
}

#[pyfunction]
fn optimal_k(n: u64, r: u64) -> PyResult<u64> {
    amplify::optimal_k(n, r).map_err(py_err)
}

#[pyfunction]
fn choose_p(n: u64) -> u32 {
    amplify::choose_p(n)
}

/// Probabilities of every counting outcome `b`.
#[pyfunction]
#[pyo3(signature = (n, r, p=None))]
fn counting_distribution(n: u64, r: u64, p: Option<u32>) -> PyResult<Vec<f64>> {
    let p = p.unwrap_or_else(|| amplify::choose_p(n));
    Ok(amplify::counting_distribution(n, r, p)
        .map_err(py_err)?
        .probs()
        .to_vec())
}

/// `(r_star, k_star)`; `k_star` is `None` when `b = 0`.
#[pyfunction]
fn estimate_from_b(b: u64, p: u32, n: u64) -> PyResult<(u64, Option<u64>)> {
    let est = amplify::estimate_from_b(b, p, n).map_err(py_err)?;
    Ok((est.r_star, est.k_star))
}

#[pyfunction]
fn false_negative_prob(n: u64, r: u64, p: u32) -> PyResult<f64> {
    amplify::false_negative_prob(n, r, p).map_err(py_err)
}

#[pyfunction]
fn p_fail_total(n: u64, r: u64, p: u32) -> PyResult<f64> {
    amplify::p_fail_total(n, r, p).map_err(py_err)
}

/// `(max_bound, eps_p_argmax)`.
#[pyfunction]
fn max_fail_bound(r: u64) -> PyResult<(f64, f64)> {
    let opt = amplify::max_fail_bound(r).map_err(py_err)?;
    Ok((opt.max_bound, opt.eps_p_argmax))
}

#[pyfunction]
fn repetitions_for(delta_target: f64) -> PyResult<u32> {
    amplify::repetitions_for(delta_target).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (data, q, p, shots=2048, seed=0))]
fn run_counting_circuit<'py>(
    py: Python<'py>,
    data: &str,
    q: usize,
    p: usize,
    shots: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = StringOracleSpec::parse(data, q).map_err(py_err)?;
    let mut rng = pipeline::trial_rng(seed, 0);
    let run = qsim::run_counting_circuit(&spec, p, shots, &mut rng).map_err(py_err)?;
    circuit_dict(py, run)
}

#[pyfunction]
#[pyo3(signature = (data, q, k=None, shots=2048, seed=0))]
fn run_search_circuit<'py>(
    py: Python<'py>,
    data: &str,
    q: usize,
    k: Option<u64>,
    shots: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = StringOracleSpec::parse(data, q).map_err(py_err)?;
    let k = match k {
        Some(k) => k,
        None => amplify::optimal_k(1 << spec.n(), spec.match_count()).map_err(py_err)?,
    };
    let mut rng = pipeline::trial_rng(seed, 0);
    let run = qsim::run_search_circuit(&spec, k, shots, &mut rng).map_err(py_err)?;
    let success = qsim::success_probability(&spec, &run.marginal);
    let dict = circuit_dict(py, run)?;
    dict.set_item("success_probability", success)?;
    Ok(dict)
}

fn circuit_dict(py: Python<'_>, run: qsim::CircuitRun) -> PyResult<Bound<'_, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("marginal", run.marginal)?;
    dict.set_item("counts", run.shots.counts)?;
    dict.set_item("grover_calls", run.grover_calls)?;
    Ok(dict)
}

/// Monte Carlo oracle-cost summary as a dict.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (n, r, trials, seed, p=None, strategy="reuse-k", max_attempts=pipeline::DEFAULT_MAX_ATTEMPTS))]
fn monte_carlo<'py>(
    py: Python<'py>,
    n: u64,
    r: u64,
    trials: u64,
    seed: u64,
    p: Option<u32>,
    strategy: &str,
    max_attempts: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = McConfig {
        n,
        r,
        p,
        strategy: self::strategy(strategy)?,
        trials,
        seed,
        max_attempts,
    };
    let summary = py
        .allow_threads(|| pipeline::monte_carlo(&cfg))
        .map_err(py_err)?;
    to_py(py, &summary)
}

#[pyfunction]
#[pyo3(signature = (f=1.0, t_obs=1.0, delta_f=1.0, delta_f1=1e-9, delta_target=1e-6))]
fn cw_cost(
    py: Python<'_>,
    f: f64,
    t_obs: f64,
    delta_f: f64,
    delta_f1: f64,
    delta_target: f64,
) -> PyResult<Bound<'_, PyAny>> {
    let spec = CwSearchSpec {
        f,
        t_obs,
        delta_f,
        delta_f1,
        delta_target,
    };
    to_py(py, &cw::quantum_cost(&spec).map_err(py_err)?)
}

/// Linear-chirp template bank on an `(f0, f1)` lattice.
#[pyclass(frozen)]
struct Bank {
    spec: BankSpec,
}

#[pymethods]
impl Bank {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        f0_min: f64,
        f0_max: f64,
        n_f0: u64,
        f1_min: f64,
        f1_max: f64,
        n_f1: u64,
        fs_hz: f64,
        m_samples: usize,
        dur_s: f64,
    ) -> PyResult<Self> {
        let spec = BankSpec {
            f0_min,
            f0_max,
            n_f0,
            f1_min,
            f1_max,
            n_f1,
            fs_hz,
            m_samples,
            dur_s,
        };
        spec.validate().map_err(py_err)?;
        Ok(Self { spec })
    }

    fn __len__(&self) -> usize {
        self.spec.size() as usize
    }

    /// `(f0, f1, dur, phi0)` of template `idx`.
    fn params(&self, idx: u64) -> PyResult<(f64, f64, f64, f64)> {
        let p = self.spec.params(TemplateIndex(idx)).map_err(py_err)?;
        Ok((p.f0, p.f1, p.dur, p.phi0))
    }

    fn waveform(&self, idx: u64) -> PyResult<Vec<f64>> {
        Ok(self
            .spec
            .waveform(TemplateIndex(idx))
            .map_err(py_err)?
            .into_samples())
    }

    /// Matched-filter SNR series of template `idx` against `data`; white
    /// noise of unit variance is assumed when `psd` is omitted.
    #[pyo3(signature = (data, idx, psd=None))]
    fn snr(&self, data: Vec<f64>, idx: u64, psd: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let (ts, psd) = self.inputs(data, psd)?;
        let params = self.spec.params(TemplateIndex(idx)).map_err(py_err)?;
        snr_of(&ts, &params, &psd)
    }

    /// Indices whose peak SNR reaches `rho_thr`, found by scanning the bank.
    #[pyo3(signature = (data, rho_thr, psd=None))]
    fn classical_search(
        &self,
        py: Python<'_>,
        data: Vec<f64>,
        rho_thr: f64,
        psd: Option<Vec<f64>>,
    ) -> PyResult<Vec<u64>> {
        let (ts, psd) = self.inputs(data, psd)?;
        let oracle = MatchedFilterOracle::new(self.spec, &ts, &psd, rho_thr).map_err(py_err)?;
        let found = py
            .allow_threads(|| pipeline::classical_search(&oracle, &mut OracleCounter::new()))
            .map_err(py_err)?;
        Ok(found.into_iter().map(|i| i.0).collect())
    }
}

impl Bank {
    fn inputs(&self, data: Vec<f64>, psd: Option<Vec<f64>>) -> PyResult<(TimeSeries, Psd)> {
        let ts = TimeSeries::from_rate(data, self.spec.fs_hz, 0.0).map_err(py_err)?;
        let dt = ts.dt();
        let psd = match psd {
            Some(values) => Psd::new(values, self.spec.fs_hz / ts.len() as f64),
            None => Psd::white(2.0 * dt, dt, ts.len()),
        }
        .map_err(py_err)?;
        Ok((ts, psd))
    }
}

fn snr_of(ts: &TimeSeries, params: &ChirpParams, psd: &Psd) -> PyResult<Vec<f64>> {
    let qc = dsp::complex_template(params, ts.fs(), ts.len(), psd).map_err(py_err)?;
    let snr = dsp::snr_series(&dsp::forward_fft(ts), &qc, psd).map_err(py_err)?;
    Ok(snr.rho)
}

#[pymodule]
fn qmfilter(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Bank>()?;
    m.add_function(wrap_pyfunction!(theta_of, m)?)?;
    m.add_function(wrap_pyfunction!(p_match, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_k, m)?)?;
    m.add_function(wrap_pyfunction!(choose_p, m)?)?;
    m.add_function(wrap_pyfunction!(counting_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_from_b, m)?)?;
    m.add_function(wrap_pyfunction!(false_negative_prob, m)?)?;
    m.add_function(wrap_pyfunction!(p_fail_total, m)?)?;
    m.add_function(wrap_pyfunction!(max_fail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(repetitions_for, m)?)?;
    m.add_function(wrap_pyfunction!(run_counting_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(run_search_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(cw_cost, m)?)?;
    Ok(())
}
