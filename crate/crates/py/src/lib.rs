//! Python bindings: the codebook, link-level helpers, a steppable
//! environment and the training/evaluation entry points.
//!
//! Structured results cross the boundary as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyString};
use serde::Serialize;

use interpmi_core::bus::{self, ControlDirective};
use interpmi_core::cmat::CMat;
use interpmi_core::codebook::{Codebook, CodebookConfig, PmiTuple, Rank};
use interpmi_core::harness::{self, Env, ExperimentConfig};
use interpmi_core::rl::Checkpoint;
use interpmi_core::rng::{keyed_rng, TAG_POLICY};
use interpmi_core::xapp::{Agent, AgentKind, RewardBreakdown, RewardConstants};
use interpmi_core::{csi, phy, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::Domain(_)
        | Error::Index { .. }
        | Error::Validation { .. }
        | Error::Decode { .. }
        | Error::Checkpoint(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trips a serializable value through JSON into Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// JSON text of a str or of any JSON-serializable Python object.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_str()?.to_owned());
    }
    obj.py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()
}

fn config(obj: Option<&Bound<'_, PyAny>>) -> PyResult<ExperimentConfig> {
    let cfg = match obj {
        Some(o) if !o.is_none() => ExperimentConfig::from_json(&json_text(o)?).map_err(py_err)?,
        _ => ExperimentConfig::default(),
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

fn rank(r: u8) -> PyResult<Rank> {
    Rank::try_from(r).map_err(PyValueError::new_err)
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(
            "channel must be a non-empty rectangular matrix",
        ));
    }
    let n = rows.len();
    Ok(CMat::from_vec(
        n,
        cols,
        rows.into_iter().flatten().collect(),
    ))
}

/// Type I single-panel codebook.
#[pyclass(name = "Codebook", frozen)]
struct PyCodebook {
    inner: Arc<Codebook>,
}

#[pymethods]
impl PyCodebook {
    #[new]
    #[pyo3(signature = (n1 = 4, n2 = 1, o1 = 4, o2 = 1))]
    fn new(n1: usize, n2: usize, o1: usize, o2: usize) -> PyResult<Self> {
        let cb = Codebook::build(&CodebookConfig { n1, n2, o1, o2 }).map_err(py_err)?;
        Ok(Self {
            inner: Arc::new(cb),
        })
    }

    #[getter]
    fn ports(&self) -> usize {
        self.inner.ports()
    }

    fn size(&self, rank: u8) -> PyResult<usize> {
        Ok(self.inner.len(self::rank(rank)?))
    }

    /// Precoder rows as lists of complex numbers.
    fn matrix(&self, rank: u8, index: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let w = self
            .inner
            .get_pm(self::rank(rank)?, index)
            .map_err(py_err)?;
        Ok((0..w.rows())
            .map(|r| (0..w.cols()).map(|c| w.get(r, c)).collect())
            .collect())
    }

    /// `(i11, i12, i13, i2)` of a PMI.
    fn indices(&self, rank: u8, index: usize) -> PyResult<(usize, usize, usize, usize)> {
        let t = self.inner.tuple(self::rank(rank)?, index).map_err(py_err)?;
        Ok((t.i11, t.i12, t.i13, t.i2))
    }

    fn index_of(&self, rank: u8, i11: usize, i12: usize, i13: usize, i2: usize) -> PyResult<usize> {
        self.inner
            .index_of(self::rank(rank)?, PmiTuple { i11, i12, i13, i2 })
            .map_err(py_err)
    }

    /// UE-side search over one channel matrix per subband. Returns
    /// `(ri, pmis, rates)`.
    fn select_pmi(
        &self,
        channels: Vec<Vec<Vec<Complex64>>>,
        sigma2: f64,
    ) -> PyResult<(u8, Vec<usize>, Vec<f64>)> {
        let hs = channels
            .into_iter()
            .map(matrix)
            .collect::<PyResult<Vec<_>>>()?;
        if hs.iter().any(|h| h.cols() != self.inner.ports()) {
            return Err(PyValueError::new_err(format!(
                "channels need {} columns",
                self.inner.ports()
            )));
        }
        let sel = csi::ue_select_pmi(&hs, &self.inner, sigma2).map_err(py_err)?;
        Ok((sel.ri.layers() as u8, sel.pmi, sel.se))
    }

    fn __len__(&self) -> usize {
        self.inner.len(Rank::One) + self.inner.len(Rank::Two)
    }

    fn __repr__(&self) -> String {
        format!(
            "Codebook(ports={}, rank1={}, rank2={})",
            self.inner.ports(),
            self.inner.len(Rank::One),
            self.inner.len(Rank::Two)
        )
    }
}

/// A simulated network attached to its bus, stepped one TTI at a time.
#[pyclass(name = "Env", unsendable)]
struct PyEnv {
    env: Env,
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg = self::config(config)?;
        let env = Env::new(&cfg).map_err(py_err)?;
        Ok(Self { env, cfg })
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.env.network.topology().num_cells()
    }

    #[getter]
    fn num_ues(&self) -> usize {
        self.env.network.topology().num_ues()
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.env.network.sigma2()
    }

    #[getter]
    fn tti(&self) -> u64 {
        self.env.network.tti()
    }

    /// Starts fading epoch `epoch` and returns the initial realization.
    fn reset<'py>(&mut self, py: Python<'py>, epoch: u64) -> PyResult<Bound<'py, PyAny>> {
        let r = self.env.network.reset(epoch).map_err(py_err)?;
        to_py(py, r)
    }

    /// Moves to the next TTI and returns every UE's CSI report.
    fn measure<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let reports = self.env.network.measure().map_err(py_err)?;
        to_py(py, &reports)
    }

    /// Realizes the current TTI with `directives` (control payload dicts)
    /// pending for the next one.
    #[pyo3(signature = (directives = None))]
    fn advance<'py>(
        &mut self,
        py: Python<'py>,
        directives: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let ds: Vec<ControlDirective> = match directives {
            Some(d) if !d.is_none() => serde_json::from_str(&json_text(d)?)
                .map_err(|e| PyValueError::new_err(e.to_string()))?,
            _ => Vec::new(),
        };
        let r = self.env.network.advance(&ds).map_err(py_err)?;
        to_py(py, r)
    }

    /// Runs one episode and returns its metrics rows and mean reward.
    /// Learning agents need a checkpoint and act greedily.
    #[pyo3(signature = (agent = "follow_pmi", epoch = 0, checkpoint = None))]
    fn run_episode<'py>(
        &mut self,
        py: Python<'py>,
        agent: &str,
        epoch: u64,
        checkpoint: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kind = AgentKind::parse(agent).map_err(py_err)?;
        let ck = checkpoint
            .map(|p| Checkpoint::load(&p))
            .transpose()
            .map_err(py_err)?;
        let mut a = match kind {
            AgentKind::Random => Agent::random(
                self.env.agent_context(&self.cfg),
                keyed_rng(self.cfg.seed, &[TAG_POLICY, epoch]),
            ),
            _ => harness::eval_agent(&self.env, &self.cfg, kind, ck.as_ref()).map_err(py_err)?,
        };
        let res = harness::run_episode(&mut self.env, &mut a, 0, epoch, None).map_err(py_err)?;
        let out = serde_json::json!({
            "mean_reward": res.mean_reward(),
            "rows": res.rows,
            "interference_violations": res.interference_violations,
        });
        to_py(py, &out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Env(cells={}, ues={}, tti={})",
            self.num_cells(),
            self.num_ues(),
            self.tti()
        )
    }
}

#[pyfunction]
fn cqi_to_se(cqi: u8) -> PyResult<f64> {
    phy::cqi_to_se(cqi).map_err(py_err)
}

#[pyfunction]
fn sinr_to_cqi(sinr: f64) -> PyResult<u8> {
    phy::sinr_to_cqi(sinr).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (gamma_u, interference_cost, utilization, gamma_target = 2.5, alpha = 0.7, util_target = 0.85))]
fn reward(
    gamma_u: f64,
    interference_cost: f64,
    utilization: f64,
    gamma_target: f64,
    alpha: f64,
    util_target: f64,
) -> f64 {
    let k = RewardConstants {
        gamma_target,
        alpha,
        util_target,
    };
    RewardBreakdown::from_terms(gamma_u, interference_cost, utilization, &k).reward
}

/// Canonical wire line of a bus message given as a dict or JSON text.
#[pyfunction]
fn encode<'py>(py: Python<'py>, message: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
    let msg = bus::decode(json_text(message)?.as_bytes()).map_err(py_err)?;
    Ok(PyBytes::new(py, &bus::encode(&msg)))
}

/// Parses and validates one wire line.
#[pyfunction]
fn decode<'py>(py: Python<'py>, line: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let msg = bus::decode(line).map_err(py_err)?;
    let text =
        String::from_utf8(bus::encode(&msg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Trains a learning agent; writes `reward_curve.csv` and `checkpoint.json`
/// to `out` and returns the reward curve.
#[pyfunction]
#[pyo3(signature = (agent, out, config = None))]
fn train<'py>(
    py: Python<'py>,
    agent: &str,
    out: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let kind = AgentKind::parse(agent).map_err(py_err)?;
    let t = py
        .detach(|| harness::train(&cfg, kind, &out))
        .map_err(py_err)?;
    to_py(py, &t.curve)
}

/// Evaluates one agent, writes its metrics files to `out` and returns the
/// summary.
#[pyfunction]
#[pyo3(signature = (agent, out, config = None, checkpoint = None))]
fn evaluate<'py>(
    py: Python<'py>,
    agent: &str,
    out: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
    checkpoint: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let kind = AgentKind::parse(agent).map_err(py_err)?;
    let ck = checkpoint
        .map(|p| Checkpoint::load(&p))
        .transpose()
        .map_err(py_err)?;
    let s = py
        .detach(|| harness::evaluate(&cfg, kind, ck.as_ref(), &out))
        .map_err(py_err)?;
    to_py(py, &s)
}

/// Three-way comparison on shared channels; returns one summary per agent.
#[pyfunction]
#[pyo3(signature = (out, config = None))]
fn compare<'py>(
    py: Python<'py>,
    out: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let s = py.detach(|| harness::compare(&cfg, &out)).map_err(py_err)?;
    to_py(py, &s)
}

/// The default configuration as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &ExperimentConfig::default())
}

#[pymodule]
fn interpmi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(cqi_to_se, m)?)?;
    m.add_function(wrap_pyfunction!(sinr_to_cqi, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
