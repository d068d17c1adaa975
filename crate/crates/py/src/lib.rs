//! Python bindings: opinion algebra, special functions, losses, priors,
//! calibration, synthetic data and end-to-end training.
//!
//! Structured results (reports, histories, manifests) are returned as plain
//! Python dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyAny, PyDict};

use faml::data::{synth_generate, SynthSpec};
use faml::losses;
use faml::metrics;
use faml::numerics;
use faml::opinion::opinion_from_evidence;
use faml::prior::{self, TrajectoryRecord};
use faml::trainer::{self, DataSource, TrainConfig};
use faml::{EvidenceVector, FamlError, PriorVector};

pyo3::create_exception!(pyfaml, ConfigError, PyValueError, "Invalid configuration or argument.");
pyo3::create_exception!(pyfaml, DataError, PyValueError, "Malformed or inconsistent data.");
pyo3::create_exception!(pyfaml, NumericError, PyArithmeticError, "Non-finite value or undefined function.");

fn to_py_err(e: FamlError) -> PyErr {
    let msg = e.to_string();
    match e {
        FamlError::Config(_) | FamlError::Argument(_) => ConfigError::new_err(msg),
        FamlError::Data(_) | FamlError::Dimension { .. } => DataError::new_err(msg),
        FamlError::NumericAbort { .. } | FamlError::Numeric(_) | FamlError::Domain { .. } => {
            NumericError::new_err(msg)
        }
        FamlError::Io { .. } | FamlError::State(_) => PyOSError::new_err(msg),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for faml::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Converts any serializable value into Python objects through JSON.
fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| NumericError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn prior_or_unit(prior: Option<Vec<f64>>, k: usize) -> PyResult<PriorVector> {
    match prior {
        Some(p) => PriorVector::new(p).py(),
        None => Ok(PriorVector::uniform(k)),
    }
}

#[pyfunction]
fn digamma(x: f64) -> PyResult<f64> {
    numerics::digamma(x).py()
}

#[pyfunction]
fn trigamma(x: f64) -> PyResult<f64> {
    numerics::trigamma(x).py()
}

/// Opinion of one evidence vector. Without `prior` the unit prior is used;
/// base rates follow the prior unless `pin_base_rates` is set.
#[pyfunction]
#[pyo3(signature = (evidence, prior=None, pin_base_rates=false))]
fn opinion<'py>(
    py: Python<'py>,
    evidence: Vec<f64>,
    prior: Option<Vec<f64>>,
    pin_base_rates: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let k = evidence.len();
    let prior = prior_or_unit(prior, k)?;
    let rates = if pin_base_rates {
        faml::ProbabilityVector::uniform(k)
    } else {
        prior.base_rates()
    };
    let o = opinion_from_evidence(&EvidenceVector::new(evidence).py()?, &prior, &rates).py()?;
    let projected = faml::project(&o).into_vec();
    let d = PyDict::new(py);
    d.set_item("belief", &o.belief)?;
    d.set_item("uncertainty", o.uncertainty)?;
    d.set_item("base_rates", &o.base_rates)?;
    d.set_item("projected", projected)?;
    Ok(d)
}

/// Confidence-weighted mean of per-view evidence; `uncertainties[v]` is `u_v`.
#[pyfunction]
fn aggregate(evidences: Vec<Vec<f64>>, uncertainties: Vec<f64>) -> PyResult<Vec<f64>> {
    if evidences.len() != uncertainties.len() {
        return Err(DataError::new_err(format!(
            "{} evidence vectors but {} uncertainties",
            evidences.len(),
            uncertainties.len()
        )));
    }
    let views = evidences
        .into_iter()
        .zip(uncertainties)
        .map(|(e, u)| EvidenceVector::new(e).map(|e| (e, u)))
        .collect::<faml::Result<Vec<_>>>()
        .py()?;
    Ok(faml::aggregate_weighted(&views).py()?.into_vec())
}

/// Dissonance between two Dirichlets given by their concentration parameters.
#[pyfunction]
fn dissonance(alpha_a: Vec<f64>, alpha_b: Vec<f64>) -> PyResult<f64> {
    let a = faml::DirichletParams::from_alpha(alpha_a).py()?;
    let b = faml::DirichletParams::from_alpha(alpha_b).py()?;
    faml::dissonance(&a, &b).py()
}

#[pyfunction]
fn fairness_degree(evidences: Vec<Vec<f64>>) -> PyResult<f64> {
    let set = evidences
        .into_iter()
        .map(EvidenceVector::new)
        .collect::<faml::Result<Vec<_>>>()
        .py()?;
    faml::fairness_degree(&set).py()
}

/// Expected cross-entropy and its gradient with respect to `alpha`.
#[pyfunction]
fn ace_loss(alpha: Vec<f64>, label: usize) -> PyResult<(f64, Vec<f64>)> {
    let d = faml::DirichletParams::from_alpha(alpha).py()?;
    let lg = losses::ace_loss(&d, label).py()?;
    Ok((lg.value, lg.grad))
}

#[pyfunction]
fn lambda_schedule(epoch: usize, total_epochs: usize) -> f64 {
    losses::lambda_schedule(epoch, total_epochs)
}

/// Per-class prior weights from one epoch of recorded predictions.
#[pyfunction]
#[pyo3(signature = (predicted, labels, num_classes, gamma=1.0))]
fn compute_prior(predicted: Vec<usize>, labels: Vec<usize>, num_classes: usize, gamma: f64) -> PyResult<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &y in &labels {
        *counts
            .get_mut(y)
            .ok_or_else(|| ConfigError::new_err(format!("label {y} out of range for {num_classes} classes")))? += 1;
    }
    let record = TrajectoryRecord { epoch: 0, predicted };
    Ok(prior::compute_prior(&record, &labels, &counts, gamma).py()?.as_slice().to_vec())
}

#[pyfunction]
#[pyo3(signature = (confidences, correct, num_bins=metrics::DEFAULT_ECE_BINS))]
fn ece(confidences: Vec<f64>, correct: Vec<bool>, num_bins: usize) -> PyResult<f64> {
    metrics::ece(&confidences, &correct, num_bins).py()
}

fn broadcast_dims(dims: Vec<usize>, views: usize) -> PyResult<Vec<usize>> {
    match dims.as_slice() {
        [d] => Ok(vec![*d; views]),
        ds if ds.len() == views => Ok(ds.to_vec()),
        ds => Err(ConfigError::new_err(format!("{} dims for {views} views", ds.len()))),
    }
}

/// Gaussian-cluster multi-view data: `{"views": [[[f64]]], "labels": [int]}`.
#[pyfunction]
#[pyo3(signature = (k=3, views=2, dims=vec![8], samples_per_class=200, separation=1.5, seed=0))]
fn synth<'py>(
    py: Python<'py>,
    k: usize,
    views: usize,
    dims: Vec<usize>,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = SynthSpec {
        num_classes: k,
        num_views: views,
        dims: broadcast_dims(dims, views)?,
        samples_per_class,
        separation,
        seed,
    };
    let ds = synth_generate(&spec).py()?;
    let rows: Vec<Vec<Vec<f64>>> = ds
        .views()
        .iter()
        .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect();
    let d = PyDict::new(py);
    d.set_item("views", rows)?;
    d.set_item("labels", ds.labels().to_vec())?;
    Ok(d)
}

/// Trains on a dataset directory or on synthetic data and returns
/// `{"report", "history", "manifest"}`. With `out` the run directory is
/// written too.
#[pyfunction]
#[pyo3(signature = (
    overrides=Vec::new(),
    config=None,
    data=None,
    num_classes=None,
    k=3,
    views=2,
    dims=vec![8],
    samples_per_class=200,
    separation=1.5,
    synth_seed=0,
    out=None,
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    overrides: Vec<String>,
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    num_classes: Option<usize>,
    k: usize,
    views: usize,
    dims: Vec<usize>,
    samples_per_class: usize,
    separation: f64,
    synth_seed: u64,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = TrainConfig::load(config.as_deref(), &overrides).py()?;
    let source = match data {
        Some(path) => DataSource::Directory { path, num_classes },
        None => DataSource::Synth(SynthSpec {
            num_classes: k,
            num_views: views,
            dims: broadcast_dims(dims, views)?,
            samples_per_class,
            separation,
            seed: synth_seed,
        }),
    };
    let (_, art) = py
        .detach(|| {
            let run = trainer::run_experiment(&source, &cfg, &overrides)?;
            if let Some(dir) = &out {
                trainer::write_run_dir(dir, &run.1)?;
            }
            Ok::<_, FamlError>(run)
        })
        .py()?;
    let d = PyDict::new(py);
    d.set_item("report", to_python(py, art.report())?)?;
    d.set_item("history", to_python(py, &art.history)?)?;
    d.set_item("manifest", to_python(py, &art.manifest)?)?;
    Ok(d)
}

/// Re-evaluates the checkpoints of a run directory on its recorded test split.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, run: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| {
            let manifest = trainer::read_manifest(&run)?;
            let nets = trainer::load_checkpoints(&run)?;
            let prior = trainer::read_prior(&run)?;
            let prepared = trainer::prepared_from_manifest(&manifest)?;
            trainer::evaluate(
                &nets,
                &prior.priors,
                prior.pin_base_rates,
                &prepared.test,
                manifest.partition.as_ref(),
            )
            .map(|e| e.report)
        })
        .py()?;
    to_python(py, &report)
}

#[pyfunction]
fn read_report<'py>(py: Python<'py>, run: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &trainer::read_report(&run).py()?)
}

/// Default configuration as a dict.
#[pyfunction]
fn default_config<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &TrainConfig::default())
}

#[pymodule]
fn pyfaml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_function(wrap_pyfunction!(digamma, m)?)?;
    m.add_function(wrap_pyfunction!(trigamma, m)?)?;
    m.add_function(wrap_pyfunction!(opinion, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(dissonance, m)?)?;
    m.add_function(wrap_pyfunction!(fairness_degree, m)?)?;
    m.add_function(wrap_pyfunction!(ace_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(compute_prior, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(read_report, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
