//! Python bindings for `taxorank`.
//!
//! Build with `maturin develop` (or `cargo build --features extension-module`
//! and copy the shared library to `taxorank.so`), then `import taxorank`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use taxorank::checkpoint::Checkpoint;
use taxorank::config::RunConfig;
use taxorank::embed::{load_sense_embeddings, load_word_embeddings};
use taxorank::io::open;
use taxorank::metrics::{self, DEFAULT_CUTOFF};
use taxorank::ranker::{self, fit, EpochRecord, Trainer};
use taxorank::{EncoderConfig, EncoderKind, Error, GoldStandard, TrainerConfig, TrainingPair};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for taxorank::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn gold_set(gold: Vec<String>) -> BTreeSet<String> {
    gold.into_iter().collect()
}

fn pairs(data: Vec<(String, Vec<String>)>) -> taxorank::Result<Vec<TrainingPair>> {
    data.into_iter()
        .map(|(t, g)| TrainingPair::new(t, g))
        .collect()
}

/// Word or sense embeddings keyed by token.
#[pyclass(
    name = "EmbeddingTable",
    module = "taxorank",
    frozen,
    skip_from_py_object
)]
struct PyEmbeddingTable {
    inner: Arc<taxorank::EmbeddingTable>,
}

#[pymethods]
impl PyEmbeddingTable {
    /// Builds a table from a `{token: vector}` mapping.
    #[new]
    fn new(vectors: Vec<(String, Vec<f64>)>) -> PyResult<Self> {
        let dim = vectors.first().map_or(0, |(_, v)| v.len());
        let inner = taxorank::EmbeddingTable::from_entries(dim, vectors).py()?;
        Ok(Self {
            inner: Arc::new(inner),
        })
    }

    /// Loads a GloVe-style text file.
    #[staticmethod]
    fn load_word(path: PathBuf) -> PyResult<Self> {
        let t = load_word_embeddings(open(path).py()?, None).py()?;
        Ok(Self { inner: Arc::new(t) })
    }

    /// Loads `word#id` sense vectors and averages the senses of each word.
    #[staticmethod]
    fn load_sense(path: PathBuf) -> PyResult<Self> {
        let t = load_sense_embeddings(open(path).py()?).py()?;
        Ok(Self { inner: Arc::new(t) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner.write_to(BufWriter::new(file)).py()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn get(&self, token: &str) -> Option<Vec<f64>> {
        self.inner.get(token).map(<[f64]>::to_vec)
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().map(str::to_string).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.inner.contains(token)
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingTable(len={}, dim={})",
            self.inner.len(),
            self.inner.dim()
        )
    }
}

const TRAINER_KEYS: [&str; 8] = [
    "margin",
    "negatives",
    "epochs",
    "batch_size",
    "learning_rate",
    "epsilon",
    "dropout",
    "seed",
];

fn trainer_config(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<TrainerConfig> {
    let mut run = RunConfig::default();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            if !TRAINER_KEYS.contains(&key.as_str()) {
                return Err(PyValueError::new_err(format!(
                    "unknown training option {key:?}"
                )));
            }
            run.set(&key, &v.str()?.to_cow()?).py()?;
        }
    }
    run.trainer.validate().py()?;
    Ok(run.trainer)
}

fn record_dict<'py>(py: Python<'py>, r: &EpochRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("loss", r.stats.map(|s| s.mean_loss))?;
    d.set_item("val_mrr", r.val_mrr)?;
    Ok(d)
}

/// A siamese encoder over an embedding table.
#[pyclass(name = "Model", module = "taxorank")]
struct PyModel {
    inner: ranker::Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (table, encoder = "gru", hidden_dim = 200, seed = 0, filter_widths = None, rcnn_order = 2))]
    fn new(
        table: &PyEmbeddingTable,
        encoder: &str,
        hidden_dim: usize,
        seed: u64,
        filter_widths: Option<Vec<usize>>,
        rcnn_order: usize,
    ) -> PyResult<Self> {
        let kind: EncoderKind = encoder.parse().py()?;
        let mut config = EncoderConfig::new(kind, table.inner.dim(), hidden_dim);
        if let Some(w) = filter_widths {
            config.cnn_filter_widths = w;
        }
        config.rcnn_order = rcnn_order;
        let inner = ranker::Model::new(config, Arc::clone(&table.inner), seed).py()?;
        Ok(Self { inner })
    }

    /// Restores a checkpoint written by `save` or the `taxorank train` command.
    #[staticmethod]
    fn load(path: PathBuf, table: &PyEmbeddingTable) -> PyResult<Self> {
        let ck = Checkpoint::load(path).py()?;
        let inner = ranker::Model::from_encoder(ck.encoder, Arc::clone(&table.inner)).py()?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let c = &self.inner.encoder.config;
        let run = RunConfig {
            encoder: c.kind,
            hidden_dim: c.hidden_dim,
            filter_widths: c.cnn_filter_widths.clone(),
            rcnn_order: c.rcnn_order,
            ..RunConfig::default()
        };
        let ck = Checkpoint {
            run,
            encoder: self.inner.encoder.clone(),
            seed: 0,
            best_epoch: self.inner.epochs_trained as u64,
            epochs_trained: self.inner.epochs_trained as u64,
            best_mrr: f64::NAN,
        };
        ck.save(path).py()
    }

    #[getter]
    fn encoder(&self) -> &'static str {
        self.inner.encoder.config.kind.name()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.encoder.output_dim()
    }

    fn encode(&self, term: &str) -> PyResult<Vec<f64>> {
        self.inner.encode_term(term).py()
    }

    fn score(&self, term: &str, candidate: &str) -> PyResult<f64> {
        self.inner.score(term, candidate).py()
    }

    /// The `topk` best candidates with their cosine scores.
    #[pyo3(signature = (term, vocab, topk = ranker::TOP_K))]
    fn rank(
        &self,
        py: Python<'_>,
        term: &str,
        vocab: Vec<String>,
        topk: usize,
    ) -> PyResult<Vec<(String, f64)>> {
        let model = &self.inner;
        py.detach(|| ranker::rank_candidates(model, term, &vocab, topk))
            .py()
            .map(|r| r.items)
    }

    /// One epoch over `pairs`; returns the mean hinge loss.
    #[pyo3(signature = (pairs, vocab, epoch = 1, **kwargs))]
    fn train_epoch(
        &mut self,
        py: Python<'_>,
        pairs: Vec<(String, Vec<String>)>,
        vocab: Vec<String>,
        epoch: u64,
        kwargs: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<f64> {
        let cfg = trainer_config(kwargs)?;
        let data = self::pairs(pairs).py()?;
        let model = &mut self.inner;
        py.detach(|| {
            let trainer = Trainer::new(model.table(), &data, &vocab, &cfg)?;
            trainer.train_epoch(model, epoch)
        })
        .py()
        .map(|s| s.mean_loss)
    }

    /// Trains with early selection on validation MRR. Keyword arguments use
    /// the config-file keys (`epochs`, `learning_rate`, `dropout`, ...).
    /// Returns a dict with `best_epoch`, `best_mrr` and per-epoch `history`.
    #[pyo3(signature = (train, valid, vocab, **kwargs))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        train: Vec<(String, Vec<String>)>,
        valid: Vec<(String, Vec<String>)>,
        vocab: Vec<String>,
        kwargs: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = trainer_config(kwargs)?;
        let train = pairs(train).py()?;
        let valid = pairs(valid).py()?;
        let model = &mut self.inner;
        let outcome = py
            .detach(|| fit(model, &train, &valid, &vocab, &cfg, |_| {}))
            .py()?;
        let d = PyDict::new(py);
        d.set_item("best_epoch", outcome.best_epoch)?;
        d.set_item("best_mrr", outcome.best_mrr)?;
        d.set_item("skipped_pairs", outcome.skipped_pairs)?;
        let history = outcome
            .history
            .iter()
            .map(|r| record_dict(py, r))
            .collect::<PyResult<Vec<_>>>()?;
        d.set_item("history", history)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.encoder.config;
        format!(
            "Model(encoder={}, input_dim={}, hidden_dim={})",
            c.kind, c.input_dim, c.hidden_dim
        )
    }
}

#[pyfunction]
fn cosine(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    ranker::cosine(&x, &y).py()
}

#[pyfunction]
#[pyo3(signature = (s_pos, s_neg, margin = 0.1))]
fn hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    ranker::hinge_loss(s_pos, s_neg, margin)
}

#[pyfunction]
#[pyo3(signature = (ranked, gold, cutoff = DEFAULT_CUTOFF))]
fn average_precision(ranked: Vec<String>, gold: Vec<String>, cutoff: usize) -> PyResult<f64> {
    metrics::average_precision(&ranked, &gold_set(gold), cutoff).py()
}

#[pyfunction]
#[pyo3(signature = (ranked, gold, cutoff = DEFAULT_CUTOFF))]
fn reciprocal_rank(ranked: Vec<String>, gold: Vec<String>, cutoff: usize) -> PyResult<f64> {
    metrics::reciprocal_rank(&ranked, &gold_set(gold), cutoff).py()
}

#[pyfunction]
fn precision_at_k(ranked: Vec<String>, gold: Vec<String>, k: usize) -> PyResult<f64> {
    metrics::precision_at_k(&ranked, &gold_set(gold), k).py()
}

/// Mean metrics in percent over every query of `gold`.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    predictions: HashMap<String, Vec<String>>,
    gold: Vec<(String, Vec<String>)>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut standard = GoldStandard::new();
    for (q, g) in gold {
        standard.insert(q, g).py()?;
    }
    let r = metrics::evaluate(&predictions, &standard);
    let d = PyDict::new(py);
    for (k, v) in [
        ("map", r.map),
        ("mrr", r.mrr),
        ("p@1", r.p1),
        ("p@3", r.p3),
        ("p@5", r.p5),
        ("p@15", r.p15),
    ] {
        d.set_item(k, v)?;
    }
    d.set_item("queries_evaluated", r.queries_evaluated)?;
    d.set_item("queries_skipped", r.queries_skipped)?;
    Ok(d)
}

/// Finite-difference check of one encoder on a random toy configuration.
/// Returns `(param_error, input_error)`; `param_error` is `None` for TEA.
#[pyfunction]
#[pyo3(signature = (encoder, seed = 0, inject_fault = false))]
fn gradcheck(encoder: &str, seed: u64, inject_fault: bool) -> PyResult<(Option<f64>, f64)> {
    let kind: EncoderKind = encoder.parse().py()?;
    let out = ranker::gradcheck::check_encoder(kind, seed, inject_fault).py()?;
    Ok((out.param_error, out.input_error))
}

#[pymodule]
#[pyo3(name = "taxorank")]
fn taxorank_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(hinge_loss, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(reciprocal_rank, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("TOP_K", ranker::TOP_K)?;
    Ok(())
}
