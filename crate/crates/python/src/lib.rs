//! Python bindings. Indices are 0-based throughout, as in the Rust API.

use std::sync::Arc;

use anonrec::evaluation::{run_analysis, ExperimentConfig, ExperimentResult};
use anonrec::io::{self, DatasetFormat};
use anonrec::similarity::negative_pair_count;
use anonrec::{
    audit_k_anonymity, oka_anonymize, residual_anonymity, run_case1_experiment,
    run_case2_experiment, AnonymizedMatrix, AssignmentMap, ItemSimilarityMatrix, ModelKind,
    PredictionInput, PrototypeWeighting, RatingRow, RatingScale, SparseRatingMatrix, TrainedModel,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: anonrec::Error) -> PyErr {
    match e {
        anonrec::Error::Io(msg) => PyIOError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn weighting(name: &str) -> PyResult<PrototypeWeighting> {
    match name {
        "multiplicity" => Ok(PrototypeWeighting::Multiplicity),
        "uniform" => Ok(PrototypeWeighting::Uniform),
        _ => Err(PyValueError::new_err(format!(
            "weighting must be 'multiplicity' or 'uniform', got {name:?}"
        ))),
    }
}

fn model_kind(name: &str) -> PyResult<ModelKind> {
    ModelKind::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown model {name:?}")))
}

fn row_from_pairs(pairs: Vec<(usize, f64)>) -> PyResult<RatingRow> {
    RatingRow::from_pairs(pairs).map_err(py_err)
}

/// Sparse user-item rating matrix.
#[pyclass(name = "RatingMatrix", module = "anonrec", frozen)]
struct PyRatingMatrix {
    inner: Arc<SparseRatingMatrix>,
    user_ids: Option<Vec<u64>>,
    item_ids: Option<Vec<u64>>,
}

#[pymethods]
impl PyRatingMatrix {
    /// Builds a matrix from `(user, item, value)` triples with 0-based
    /// indices. Sizes default to one past the largest index seen.
    #[staticmethod]
    #[pyo3(signature = (triples, n_users=None, n_items=None, lo=1.0, hi=5.0))]
    fn from_triples(
        triples: Vec<(usize, usize, f64)>,
        n_users: Option<usize>,
        n_items: Option<usize>,
        lo: f64,
        hi: f64,
    ) -> PyResult<Self> {
        let scale = RatingScale::new(lo, hi).map_err(py_err)?;
        let n = n_users.unwrap_or_else(|| triples.iter().map(|t| t.0 + 1).max().unwrap_or(0));
        let m = n_items.unwrap_or_else(|| triples.iter().map(|t| t.1 + 1).max().unwrap_or(0));
        let ratings: Vec<anonrec::Rating> = triples
            .into_iter()
            .map(|(u, i, v)| anonrec::Rating::new(u, i, v))
            .collect();
        let inner = SparseRatingMatrix::build(&ratings, n, m, scale).map_err(py_err)?;
        Ok(PyRatingMatrix {
            inner: Arc::new(inner),
            user_ids: None,
            item_ids: None,
        })
    }

    /// Reads a rating file (`movielens-100k`, `movielens-1m` or `csv-triples`).
    #[staticmethod]
    #[pyo3(signature = (path, format="movielens-100k", lo=1.0, hi=5.0))]
    fn load(path: &str, format: &str, lo: f64, hi: f64) -> PyResult<Self> {
        let format: DatasetFormat = format.parse().map_err(py_err)?;
        let scale = RatingScale::new(lo, hi).map_err(py_err)?;
        let data = io::load_dataset(path, format, scale).map_err(py_err)?;
        Ok(PyRatingMatrix {
            inner: Arc::new(data.matrix),
            user_ids: Some(data.user_ids),
            item_ids: Some(data.item_ids),
        })
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// External ids of users, when loaded from a file.
    #[getter]
    fn user_ids(&self) -> Option<Vec<u64>> {
        self.user_ids.clone()
    }

    #[getter]
    fn item_ids(&self) -> Option<Vec<u64>> {
        self.item_ids.clone()
    }

    fn row(&self, user: usize) -> PyResult<Vec<(usize, f64)>> {
        if user >= self.inner.n_users() {
            return Err(PyValueError::new_err(format!("user {user} out of range")));
        }
        Ok(self.inner.row(user).entries().to_vec())
    }

    fn get(&self, user: usize, item: usize) -> Option<f64> {
        (user < self.inner.n_users()).then(|| self.inner.get(user, item)).flatten()
    }

    fn item_means(&self) -> Vec<Option<f64>> {
        self.inner.item_means()
    }

    fn __repr__(&self) -> String {
        format!(
            "RatingMatrix(n_users={}, n_items={}, nnz={})",
            self.inner.n_users(),
            self.inner.n_items(),
            self.inner.nnz()
        )
    }
}

/// Published prototype table; `sigma` maps users to anonymous identities
/// when the table came from `anonymize` or a file that carries it.
#[pyclass(name = "AnonymizedMatrix", module = "anonrec", frozen)]
struct PyAnonymizedMatrix {
    inner: Arc<AnonymizedMatrix>,
    sigma: Option<Arc<AssignmentMap>>,
}

#[pymethods]
impl PyAnonymizedMatrix {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let (inner, sigma) = io::parse_anonymized(text).map_err(py_err)?;
        Ok(PyAnonymizedMatrix {
            inner: Arc::new(inner),
            sigma: sigma.map(Arc::new),
        })
    }

    /// anonrec-v1 text, optionally with the assignment map.
    #[pyo3(signature = (with_sigma=false))]
    fn to_text(&self, with_sigma: bool) -> PyResult<String> {
        let sigma = match (with_sigma, &self.sigma) {
            (false, _) => None,
            (true, Some(s)) => Some(s.as_ref()),
            (true, None) => return Err(PyValueError::new_err("table has no assignment map")),
        };
        Ok(io::format_anonymized(&self.inner, sigma))
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn n_prototypes(&self) -> usize {
        self.inner.n_prototypes()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn multiplicities(&self) -> Vec<usize> {
        self.inner.multiplicities().to_vec()
    }

    #[getter]
    fn sigma(&self) -> Option<Vec<usize>> {
        self.sigma.as_ref().map(|s| s.as_slice().to_vec())
    }

    fn prototype(&self, anon_id: usize) -> PyResult<Vec<(usize, f64)>> {
        if anon_id >= self.inner.n_prototypes() {
            return Err(PyValueError::new_err(format!("anonymous identity {anon_id} out of range")));
        }
        Ok(self.inner.prototype(anon_id).entries().to_vec())
    }

    /// `{"satisfied_k": .., "min_class_size": .., "class_sizes": {size: count}}`
    fn audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let a = audit_k_anonymity(&self.inner);
        let d = PyDict::new(py);
        d.set_item("satisfied_k", a.satisfied_k)?;
        d.set_item("min_class_size", a.min_class_size)?;
        d.set_item("class_sizes", a.class_sizes)?;
        Ok(d)
    }

    /// Class sizes left after the listed users revealed their ratings.
    fn residual(&self, revealed: Vec<usize>) -> PyResult<Vec<usize>> {
        let sigma = self
            .sigma
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("table has no assignment map"))?;
        Ok(residual_anonymity(&self.inner, sigma, &revealed)
            .map_err(py_err)?
            .residuals)
    }

    fn __repr__(&self) -> String {
        format!(
            "AnonymizedMatrix(k={}, n_prototypes={}, n_items={})",
            self.inner.k(),
            self.inner.n_prototypes(),
            self.inner.n_items()
        )
    }
}

/// Item-item Pearson similarities.
#[pyclass(name = "SimilarityMatrix", module = "anonrec", frozen)]
struct PySimilarityMatrix {
    inner: Arc<ItemSimilarityMatrix>,
}

#[pymethods]
impl PySimilarityMatrix {
    #[staticmethod]
    fn from_ratings(matrix: &PyRatingMatrix) -> Self {
        PySimilarityMatrix {
            inner: Arc::new(ItemSimilarityMatrix::from_ratings(&matrix.inner)),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (anon, weighting="multiplicity"))]
    fn from_anonymized(anon: &PyAnonymizedMatrix, weighting: &str) -> PyResult<Self> {
        Ok(PySimilarityMatrix {
            inner: Arc::new(ItemSimilarityMatrix::from_anonymized(&anon.inner, self::weighting(weighting)?)),
        })
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn source(&self) -> &'static str {
        self.inner.source().as_str()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.inner.get(i, j))
    }

    fn is_defined(&self, i: usize, j: usize) -> PyResult<bool> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.inner.is_defined(i, j))
    }

    fn item_means(&self) -> Vec<Option<f64>> {
        self.inner.item_means().to_vec()
    }

    fn negative_pairs(&self) -> usize {
        negative_pair_count(&self.inner)
    }

    /// `(bin_edges, counts)` over defined off-diagonal pairs.
    #[pyo3(signature = (bins=40))]
    fn histogram(&self, bins: usize) -> PyResult<(Vec<f64>, Vec<usize>)> {
        if bins == 0 {
            return Err(PyValueError::new_err("bins must be at least 1"));
        }
        let h = anonrec::similarity_histogram(&self.inner, bins);
        Ok((h.bin_edges, h.counts))
    }

    fn to_text(&self) -> String {
        io::format_similarity(&self.inner)
    }
}

impl PySimilarityMatrix {
    fn check(&self, i: usize) -> PyResult<()> {
        if i >= self.inner.n_items() {
            return Err(PyValueError::new_err(format!("item {i} out of range")));
        }
        Ok(())
    }
}

/// A fitted recommender for one model kind.
#[pyclass(name = "Model", module = "anonrec", frozen)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    /// Raw-data models (`Case1/REG`, `Case2/UR`, `BASELINE`) take `ratings`;
    /// anonymized ones (`Case1A/UR`, `Case1A/AI`, `Case2A/UR`) take `anon`.
    #[new]
    #[pyo3(signature = (kind, ratings=None, anon=None, weighting="multiplicity"))]
    fn new(
        kind: &str,
        ratings: Option<&PyRatingMatrix>,
        anon: Option<&PyAnonymizedMatrix>,
        weighting: &str,
    ) -> PyResult<Self> {
        let kind = model_kind(kind)?;
        let inner = match (ratings, anon) {
            (Some(r), None) => TrainedModel::fit_raw(kind, r.inner.clone()).map_err(py_err)?,
            (None, Some(a)) => {
                let sims = ItemSimilarityMatrix::from_anonymized(&a.inner, self::weighting(weighting)?);
                let model = TrainedModel::new(kind, Arc::new(sims), None, Some(a.inner.clone()), a.inner.scale())
                    .map_err(py_err)?;
                match &a.sigma {
                    Some(s) => model.with_assignment(s.clone()),
                    None => model,
                }
            }
            _ => return Err(PyValueError::new_err("pass exactly one of ratings= or anon=")),
        };
        Ok(PyModel { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    /// Predicts `item` from one kind of input: `user` (an identity),
    /// `ratings` (revealed `(item, value)` pairs), `anon_id`, or nothing.
    /// Returns `(value, fallback_level)`.
    #[pyo3(signature = (item, user=None, ratings=None, anon_id=None))]
    fn predict(
        &self,
        item: usize,
        user: Option<usize>,
        ratings: Option<Vec<(usize, f64)>>,
        anon_id: Option<usize>,
    ) -> PyResult<(f64, &'static str)> {
        let input = match (user, ratings, anon_id) {
            (Some(u), None, None) => PredictionInput::UserIdentity(u),
            (None, Some(r), None) => PredictionInput::UserRatings(row_from_pairs(r)?),
            (None, None, Some(a)) => PredictionInput::AnonymousIdentity(a),
            (None, None, None) => PredictionInput::Empty,
            _ => return Err(PyValueError::new_err("pass at most one of user=, ratings=, anon_id=")),
        };
        let p = self.inner.predict(&input, item).map_err(py_err)?;
        Ok((p.value, p.fallback_level.as_str()))
    }
}

/// Clusters users into groups of at least `k` and publishes the prototypes.
#[pyfunction]
#[pyo3(signature = (matrix, k, seed=0))]
fn anonymize(py: Python<'_>, matrix: &PyRatingMatrix, k: usize, seed: u64) -> PyResult<PyAnonymizedMatrix> {
    let m = matrix.inner.clone();
    let (inner, sigma) = py.detach(|| oka_anonymize(&m, k, seed)).map_err(py_err)?;
    Ok(PyAnonymizedMatrix {
        inner: Arc::new(inner),
        sigma: Some(Arc::new(sigma)),
    })
}

fn rows_to_py<'py>(py: Python<'py>, result: &ExperimentResult) -> PyResult<Vec<Bound<'py, PyDict>>> {
    result
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("model", r.model.as_str())?;
            d.set_item("k", r.k)?;
            d.set_item("n", r.n)?;
            d.set_item("rmse", r.rmse)?;
            d.set_item("rmse_sd", r.rmse_sd)?;
            d.set_item("fallback_rate", r.fallback_rate)?;
            Ok(d)
        })
        .collect()
}

/// RMSE versus k under rating holdout. Returns one dict per result row.
#[pyfunction]
#[pyo3(signature = (matrix, k_values=None, trials=20, seed=0, holdout=0.2, input_fraction=0.2, weighting="multiplicity"))]
#[allow(clippy::too_many_arguments)]
fn run_case1<'py>(
    py: Python<'py>,
    matrix: &PyRatingMatrix,
    k_values: Option<Vec<usize>>,
    trials: usize,
    seed: u64,
    holdout: f64,
    input_fraction: f64,
    weighting: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = ExperimentConfig::case1(seed);
    if let Some(k) = k_values {
        config.k_values = k;
    }
    config.trials = trials;
    config.holdout_fraction = holdout;
    config.prediction_input_fraction = input_fraction;
    config.weighting = self::weighting(weighting)?;
    let m = matrix.inner.clone();
    let result = py.detach(|| run_case1_experiment(&m, &config)).map_err(py_err)?;
    rows_to_py(py, &result)
}

/// RMSE versus N under user holdout.
#[pyfunction]
#[pyo3(signature = (matrix, k_values=None, n_values=None, draws=20, trials=1, seed=0, holdout=0.2, weighting="multiplicity"))]
#[allow(clippy::too_many_arguments)]
fn run_case2<'py>(
    py: Python<'py>,
    matrix: &PyRatingMatrix,
    k_values: Option<Vec<usize>>,
    n_values: Option<Vec<usize>>,
    draws: usize,
    trials: usize,
    seed: u64,
    holdout: f64,
    weighting: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = ExperimentConfig::case2(seed);
    if let Some(k) = k_values {
        config.k_values = k;
    }
    if let Some(n) = n_values {
        config.n_values = n;
    }
    config.draws = draws;
    config.trials = trials;
    config.holdout_fraction = holdout;
    config.weighting = self::weighting(weighting)?;
    let m = matrix.inner.clone();
    let result = py.detach(|| run_case2_experiment(&m, &config)).map_err(py_err)?;
    rows_to_py(py, &result)
}

/// Mean shift and negative-similarity counts per k: a list of
/// `{"k", "e_avg", "negative_pairs", "defined_pairs", "density"}` plus the
/// raw counts under key `k = 0`.
#[pyfunction]
#[pyo3(signature = (matrix, k_values=None, seed=0, weighting="multiplicity"))]
fn analyze<'py>(
    py: Python<'py>,
    matrix: &PyRatingMatrix,
    k_values: Option<Vec<usize>>,
    seed: u64,
    weighting: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = ExperimentConfig::case1(seed);
    if let Some(k) = k_values {
        config.k_values = k;
    }
    config.trials = 1;
    config.weighting = self::weighting(weighting)?;
    let m = matrix.inner.clone();
    let report = py.detach(|| run_analysis(&m, &config)).map_err(py_err)?;
    let raw = PyDict::new(py);
    raw.set_item("k", 0)?;
    raw.set_item("negative_pairs", report.raw_negative_pairs)?;
    raw.set_item("defined_pairs", report.raw_defined_pairs)?;
    let mut out = vec![raw];
    for a in &report.per_k {
        let d = PyDict::new(py);
        d.set_item("k", a.k)?;
        d.set_item("e_avg", a.mean_shift.e_avg)?;
        d.set_item("negative_pairs", a.negative_pairs)?;
        d.set_item("defined_pairs", a.defined_pairs)?;
        d.set_item("density", a.density)?;
        out.push(d);
    }
    Ok(out)
}

#[pymodule(name = "anonrec")]
fn anonrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRatingMatrix>()?;
    m.add_class::<PyAnonymizedMatrix>()?;
    m.add_class::<PySimilarityMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(anonymize, m)?)?;
    m.add_function(wrap_pyfunction!(run_case1, m)?)?;
    m.add_function(wrap_pyfunction!(run_case2, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
