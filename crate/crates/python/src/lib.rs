//! Python bindings. Matrices cross the boundary as lists of rows of Python
//! `complex` (real numbers are accepted too).

use crspec_core::harness::{emit, run_scenario as run, ScenarioConfig};
use crspec_core::matkernel::CMatrix;
use crspec_core::mimo::{self, HybridConfig};
use crspec_core::multichannel::{self, Tone, ToneSet};
use crspec_core::{miso, model, theory, waterfill};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Rows = Vec<Vec<Complex64>>;

fn err(e: crspec_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &Rows) -> PyResult<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix must be a non-empty list of equal-length rows"));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Secondary channel `h`, cross channels `g`, power budget and one cap per primary receiver.
#[pyclass(frozen)]
struct ChannelSet(model::ChannelSet);

#[pymethods]
impl ChannelSet {
    #[new]
    fn new(h: Rows, g: Vec<Rows>, pt: f64, gamma: Vec<f64>) -> PyResult<Self> {
        let g = g.iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        Ok(ChannelSet(model::ChannelSet::new(to_matrix(&h)?, g, pt, gamma).map_err(err)?))
    }

    #[getter]
    fn h(&self) -> Rows {
        to_rows(self.0.h())
    }

    #[getter]
    fn g(&self) -> Vec<Rows> {
        self.0.g().iter().map(to_rows).collect()
    }

    #[getter]
    fn pt(&self) -> f64 {
        self.0.pt()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.0.gamma().to_vec()
    }

    fn with_power_budget(&self, pt: f64) -> Self {
        ChannelSet(self.0.with_power_budget(pt))
    }

    fn __repr__(&self) -> String {
        format!("ChannelSet(mts={}, mrs={}, k={}, pt={})", self.0.mts(), self.0.mrs(), self.0.k(), self.0.pt())
    }
}

#[pyclass(frozen)]
struct PrecoderResult(model::PrecoderResult);

#[pymethods]
impl PrecoderResult {
    /// Bits per complex dimension.
    #[getter]
    fn rate(&self) -> f64 {
        self.0.rate
    }

    #[getter]
    fn tx_power(&self) -> f64 {
        self.0.tx_power
    }

    #[getter]
    fn interference(&self) -> Vec<f64> {
        self.0.interference.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.to_string()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn duality_gap(&self) -> Option<f64> {
        self.0.duality_gap
    }

    #[getter]
    fn covariance(&self) -> Rows {
        to_rows(self.0.cov.s())
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.cov.eigenvalues()
    }

    fn __repr__(&self) -> String {
        format!("PrecoderResult(method={}, rate={:.6}, tx_power={:.6})", self.0.method, self.0.rate, self.0.tx_power)
    }
}

fn wrap(r: crspec_core::Result<model::PrecoderResult>) -> PyResult<PrecoderResult> {
    r.map(PrecoderResult).map_err(err)
}

#[pyfunction]
fn optimal_covariance(cs: &ChannelSet) -> PyResult<PrecoderResult> {
    wrap(mimo::optimal_covariance(&cs.0))
}

#[pyfunction]
fn unconstrained_capacity(cs: &ChannelSet) -> PyResult<PrecoderResult> {
    wrap(mimo::unconstrained_capacity(&cs.0))
}

#[pyfunction]
fn dsvd(cs: &ChannelSet) -> PyResult<PrecoderResult> {
    wrap(mimo::dsvd(&cs.0))
}

#[pyfunction]
fn psvd(cs: &ChannelSet) -> PyResult<PrecoderResult> {
    wrap(mimo::psvd(&cs.0))
}

#[pyfunction]
fn hybrid(cs: &ChannelSet, b: usize) -> PyResult<PrecoderResult> {
    wrap(mimo::hybrid(&cs.0, HybridConfig { b }))
}

/// Returns `(b, result)` for the best number of projected directions.
#[pyfunction]
fn best_hybrid(cs: &ChannelSet) -> PyResult<(usize, PrecoderResult)> {
    let (cfg, r) = mimo::best_hybrid(&cs.0).map_err(err)?;
    Ok((cfg.b, PrecoderResult(r)))
}

#[pyfunction]
fn white_spectrum(cs: &ChannelSet) -> PyResult<PrecoderResult> {
    wrap(mimo::white_spectrum(&cs.0))
}

/// Single-receive-antenna link with one single-antenna primary receiver.
#[pyfunction]
fn closed_form_beamformer(h: Vec<Complex64>, g: Vec<Complex64>, pt: f64, gamma: f64) -> PyResult<PrecoderResult> {
    wrap(miso::closed_form_beamformer(&to_matrix(&vec![h])?, &to_matrix(&vec![g])?, pt, gamma))
}

/// Returns `(sigma, nu)`.
#[pyfunction]
fn standard_wf(gains: Vec<f64>, p: f64) -> PyResult<(Vec<f64>, f64)> {
    let a = waterfill::standard_wf(&gains, p).map_err(err)?;
    Ok((a.sigma, a.nu))
}

/// Returns `(sigma, nu, mu)`.
#[pyfunction]
fn single_cap_wf(gains: Vec<f64>, alpha: Vec<f64>, pt: f64, gamma: f64) -> PyResult<(Vec<f64>, f64, f64)> {
    let a = waterfill::single_cap_wf(&gains, &alpha, pt, gamma).map_err(err)?;
    Ok((a.sigma, a.nu, a.mu[0]))
}

/// Tones as `(h, g)` pairs; returns `(per_tone_rates, total_power, duality_gap)`.
#[pyfunction]
fn multitone_optimal(tones: Vec<(Rows, Rows)>, pt: f64, gamma: f64) -> PyResult<(Vec<f64>, f64, Option<f64>)> {
    let tones = tones
        .iter()
        .map(|(h, g)| Ok(Tone { h: to_matrix(h)?, g: to_matrix(g)? }))
        .collect::<PyResult<Vec<_>>>()?;
    let a = multichannel::multitone_optimal(&ToneSet::new(tones, pt, gamma).map_err(err)?).map_err(err)?;
    Ok((a.rates, a.total_power, a.duality_gap))
}

#[pyfunction]
fn capacity_loss_bound(m_k: usize, n_k: usize, gamma: f64, phi: f64) -> f64 {
    theory::capacity_loss_bound(m_k, n_k, gamma, phi)
}

/// Primary-link loss caused by the secondary covariance `s`.
#[pyfunction]
fn capacity_loss_actual(h_k: Rows, s_k: Rows, phi: f64, g_k: Rows, s: Rows) -> PyResult<f64> {
    let s_k = model::Covariance::new(to_matrix(&s_k)?).map_err(err)?;
    let s = model::Covariance::new(to_matrix(&s)?).map_err(err)?;
    let link = theory::PrimaryLink::new(to_matrix(&h_k)?, s_k, phi, to_matrix(&g_k)?, s).map_err(err)?;
    theory::capacity_loss_actual(&link).map_err(err)
}

/// Runs a scenario from a JSON config and returns the CSV table.
#[pyfunction]
fn run_scenario(config_json: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_json(config_json).map_err(err)?;
    let report = run(&cfg).map_err(err)?;
    let mut buf = Vec::new();
    emit::write_csv(&report.rows, &mut buf).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn crspec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ChannelSet>()?;
    m.add_class::<PrecoderResult>()?;
    m.add_function(wrap_pyfunction!(optimal_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(unconstrained_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(dsvd, m)?)?;
    m.add_function(wrap_pyfunction!(psvd, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid, m)?)?;
    m.add_function(wrap_pyfunction!(best_hybrid, m)?)?;
    m.add_function(wrap_pyfunction!(white_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_beamformer, m)?)?;
    m.add_function(wrap_pyfunction!(standard_wf, m)?)?;
    m.add_function(wrap_pyfunction!(single_cap_wf, m)?)?;
    m.add_function(wrap_pyfunction!(multitone_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_loss_bound, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_loss_actual, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
