use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use harqbuf::cli::{execute, parse_spec, report::to_bytes};
use harqbuf::fbl::{fbl_throughput as fbl_point, FblConfig};
use harqbuf::mimo::{self, compare_allocations, MimoConfig};
use harqbuf::model::{db_to_linear, ti_pe_closed_form as ti_pe};
use harqbuf::{Error, Modulation, Scheme, StorageDomain};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Throughput estimate of one configuration point.
#[pyclass(name = "ThroughputResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyThroughputResult {
    throughput: f64,
    ci95: f64,
    expected_attempts: f64,
    /// Failure probability through attempts 1..n_max.
    pe: Vec<f64>,
    trials: u64,
}

#[pymethods]
impl PyThroughputResult {
    fn __repr__(&self) -> String {
        format!(
            "ThroughputResult(throughput={:.6}, ci95={:.6}, expected_attempts={:.4}, trials={})",
            self.throughput, self.ci95, self.expected_attempts, self.trials
        )
    }
}

fn wrap(curve: &harqbuf::PeCurve, t: &harqbuf::ThroughputResult) -> PyThroughputResult {
    PyThroughputResult {
        throughput: t.throughput,
        ci95: t.ci_halfwidth,
        expected_attempts: t.expected_attempts,
        pe: curve.pe[1..].to_vec(),
        trials: curve.trials,
    }
}

#[pyclass(name = "HarqConfig")]
struct PyHarqConfig {
    inner: harqbuf::HarqConfig,
}

#[pymethods]
impl PyHarqConfig {
    #[new]
    #[pyo3(signature = (scheme, snr_db, rate, c, n_max=10, modulation="gaussian", domain="baseband",
                        eta=None, optimal_combiner=false, trials=100_000, seed=1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        scheme: &str,
        snr_db: f64,
        rate: f64,
        c: f64,
        n_max: usize,
        modulation: &str,
        domain: &str,
        eta: Option<f64>,
        optimal_combiner: bool,
        trials: u64,
        seed: u64,
    ) -> PyResult<Self> {
        let scheme = Scheme::parse(scheme)
            .ok_or_else(|| PyValueError::new_err(format!("unknown scheme `{scheme}`")))?;
        let modulation = Modulation::parse(modulation)
            .ok_or_else(|| PyValueError::new_err(format!("unknown modulation `{modulation}`")))?;
        let domain = StorageDomain::parse(domain)
            .ok_or_else(|| PyValueError::new_err(format!("unknown domain `{domain}`")))?;
        let inner = harqbuf::HarqConfig {
            scheme,
            domain,
            snr: db_to_linear(snr_db),
            rate,
            buffer_c: c,
            n_max,
            modulation,
            eta,
            optimal_combiner,
            trials,
            seed,
            stream: 0,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyHarqConfig { inner })
    }

    /// Runs the Monte Carlo estimate; `workers=0` uses every core.
    #[pyo3(signature = (workers=0))]
    fn run(&self, py: Python<'_>, workers: usize) -> PyResult<PyThroughputResult> {
        let cfg = self.inner.clone();
        let (curve, t) = py
            .detach(|| harqbuf::engine::run_point(&cfg, workers))
            .map_err(py_err)?;
        Ok(wrap(&curve, &t))
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "HarqConfig(scheme='{}', snr_db={}, rate={}, c={}, n_max={}, modulation='{}', domain='{}', trials={}, seed={})",
            c.scheme,
            harqbuf::model::linear_to_db(c.snr),
            c.rate,
            c.buffer_c,
            c.n_max,
            c.modulation.label(),
            c.domain.as_str(),
            c.trials,
            c.seed
        )
    }
}

/// Water-filling gains and multiplier for a stored packet.
#[pyfunction]
fn waterfill(eigenvalues: Vec<f64>, budget: f64) -> PyResult<(Vec<f64>, f64)> {
    let a = mimo::waterfill(&eigenvalues, budget).map_err(py_err)?;
    Ok((a.gains, a.mu))
}

/// Stored-packet rate of the given gains.
#[pyfunction]
fn stored_rate(eigenvalues: Vec<f64>, gains: Vec<f64>) -> PyResult<f64> {
    if eigenvalues.len() != gains.len() {
        return Err(PyValueError::new_err(
            "eigenvalues and gains differ in length",
        ));
    }
    Ok(mimo::stored_rate(&eigenvalues, &gains))
}

/// Type-I failure probability through attempt `n` under Rayleigh fading.
#[pyfunction]
fn ti_pe_closed_form(snr_db: f64, rate: f64, n: usize) -> f64 {
    ti_pe(db_to_linear(snr_db), rate, n)
}

/// Water-filling and identity-scaling throughput of MIMO HARQ-IR.
#[pyfunction]
#[pyo3(signature = (nt, nr, snr_db, rate, c, n_max=10, trials=10_000, seed=1, workers=0))]
#[allow(clippy::too_many_arguments)]
fn mimo_compare(
    py: Python<'_>,
    nt: usize,
    nr: usize,
    snr_db: f64,
    rate: f64,
    c: f64,
    n_max: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> PyResult<(f64, f64)> {
    let cfg = MimoConfig {
        nt,
        nr,
        snr: db_to_linear(snr_db),
        rate,
        buffer_c: c,
        n_max,
        trials,
        seed,
        ..MimoConfig::default()
    };
    let row = py
        .detach(|| compare_allocations(&cfg, workers))
        .map_err(py_err)?;
    Ok((row.waterfill.throughput, row.identity.throughput))
}

/// Finite-blocklength IR throughput and delay `L E[N]`.
#[pyfunction]
#[pyo3(signature = (info_bits, blocklength, total_buffer, snr_db, eps_q=1e-4, n_max=10, trials=10_000, seed=1, workers=0))]
#[allow(clippy::too_many_arguments)]
fn fbl_throughput(
    py: Python<'_>,
    info_bits: f64,
    blocklength: f64,
    total_buffer: f64,
    snr_db: f64,
    eps_q: f64,
    n_max: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> PyResult<(PyThroughputResult, f64)> {
    let cfg = FblConfig {
        info_bits,
        blocklength,
        total_buffer,
        eps_q,
        snr: db_to_linear(snr_db),
        n_max,
        trials,
        seed,
        stream: 0,
    };
    let row = py.detach(|| fbl_point(&cfg, workers)).map_err(py_err)?;
    Ok((wrap(&row.curve, &row.result), row.delay))
}

/// Runs an experiment spec given as TOML text and returns the CSV output.
#[pyfunction]
#[pyo3(signature = (text, workers=0))]
fn run_spec(py: Python<'_>, text: &str, workers: usize) -> PyResult<String> {
    let spec = parse_spec(text).map_err(py_err)?;
    let outcome = py.detach(|| execute(&spec, workers)).map_err(py_err)?;
    if !outcome.failures.is_empty() {
        return Err(PyValueError::new_err(format!(
            "failed points: {}",
            outcome.failures.join("; ")
        )));
    }
    let bytes = to_bytes(&outcome.table).map_err(py_err)?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

#[pymodule]
#[pyo3(name = "harqbuf")]
fn harqbuf_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHarqConfig>()?;
    m.add_class::<PyThroughputResult>()?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(stored_rate, m)?)?;
    m.add_function(wrap_pyfunction!(ti_pe_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(mimo_compare, m)?)?;
    m.add_function(wrap_pyfunction!(fbl_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(run_spec, m)?)?;
    Ok(())
}
