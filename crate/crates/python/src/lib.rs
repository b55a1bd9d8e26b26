//! Python bindings: corpora, the four trainers, and the evaluation metrics.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nplsa_core::autostop::AutoConfig;
use nplsa_core::corpus::{looks_sparse, read_sparse_corpus, read_text_corpus};
use nplsa_core::model::{ModelFile, ModelMeta};
use nplsa_core::{
    Corpus, DocTopicMix, EmConfig, Error, NplsaConfig, RunTrace, SynthConfig, TopicSet, Vocabulary,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e if e.is_algorithmic() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for nplsa_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A bag-of-words corpus.
#[pyclass(name = "Corpus", module = "pynplsa", frozen)]
pub struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    /// One document per string; lowercased, split on non-alphanumerics.
    #[staticmethod]
    #[pyo3(signature = (texts, min_df = 1, stopwords = None))]
    fn from_texts(texts: Vec<String>, min_df: usize, stopwords: Option<Vec<String>>) -> PyResult<Self> {
        let stop = stopwords.map(|s| s.into_iter().map(|w| w.to_lowercase()).collect());
        let inner = nplsa_core::ingest_text(&texts, min_df, stop.as_ref()).py()?;
        Ok(Self { inner })
    }

    /// `(doc_id, term, count)` triples.
    #[staticmethod]
    fn from_triples(triples: Vec<(String, String, i64)>) -> PyResult<Self> {
        Ok(Self {
            inner: nplsa_core::ingest_sparse(triples).py()?,
        })
    }

    /// Reads a sparse `doc term count` file or a text file with one document per line.
    #[staticmethod]
    #[pyo3(signature = (path, min_df = 1))]
    fn read(path: &str, min_df: usize) -> PyResult<Self> {
        let inner = if looks_sparse(path).py()? {
            read_sparse_corpus(path).py()?
        } else {
            read_text_corpus(path, min_df, None).py()?
        };
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_sparse(path).py()
    }

    #[getter]
    fn n_docs(&self) -> usize {
        self.inner.n_docs()
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.inner.n_terms()
    }

    #[getter]
    fn total_tokens(&self) -> u64 {
        self.inner.total_tokens()
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab().terms().to_vec()
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.inner.doc_ids().to_vec()
    }

    /// Ids of input documents that were empty after filtering.
    #[getter]
    fn dropped(&self) -> Vec<String> {
        self.inner.dropped().to_vec()
    }

    /// `{term: count}` for document `d`.
    fn doc(&self, d: usize) -> PyResult<Vec<(String, u32)>> {
        if d >= self.inner.n_docs() {
            return Err(PyValueError::new_err(format!("document {d} out of range")));
        }
        let terms = self.inner.vocab().terms();
        Ok(self.inner.doc(d).iter().map(|(t, c)| (terms[t as usize].clone(), c)).collect())
    }

    fn background(&self) -> Vec<f64> {
        nplsa_core::background_model(&self.inner).into_inner()
    }

    fn __len__(&self) -> usize {
        self.inner.n_docs()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(docs={}, terms={}, tokens={})",
            self.inner.n_docs(),
            self.inner.n_terms(),
            self.inner.total_tokens()
        )
    }
}

/// A trained topic model with its training trace.
#[pyclass(name = "Model", module = "pynplsa", frozen)]
pub struct PyModel {
    vocab: Vocabulary,
    topics: TopicSet,
    mixes: Option<DocTopicMix>,
    trace: RunTrace,
    meta: ModelMeta,
}

impl PyModel {
    fn new(corpus: &Corpus, topics: TopicSet, mixes: DocTopicMix, trace: RunTrace, algo: &str, seed: u64, epsilon: Option<f64>) -> Self {
        let meta = ModelMeta {
            k: topics.n_topics(),
            seed,
            iters: trace.rows.len(),
            algo: Some(algo.to_string()),
            epsilon,
        };
        Self {
            vocab: corpus.vocab().clone(),
            topics,
            mixes: Some(mixes),
            trace,
            meta,
        }
    }
}

#[pymethods]
impl PyModel {
    #[getter]
    fn k(&self) -> usize {
        self.topics.n_topics()
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.vocab.terms().to_vec()
    }

    /// K rows of p(w|z).
    #[getter]
    fn topics(&self) -> Vec<Vec<f64>> {
        self.topics.to_rows()
    }

    /// Per-document p(z|d), or None for models loaded without them.
    #[getter]
    fn mixes(&self) -> Option<Vec<Vec<f64>>> {
        self.mixes.as_ref().map(|m| m.padded(self.topics.n_topics()))
    }

    #[getter]
    fn algo(&self) -> Option<String> {
        self.meta.algo.clone()
    }

    #[pyo3(signature = (topic, n = 10))]
    fn top_words(&self, topic: usize, n: usize) -> PyResult<Vec<String>> {
        if topic >= self.topics.n_topics() {
            return Err(PyValueError::new_err(format!("topic {topic} out of range")));
        }
        let terms = self.vocab.terms();
        Ok(self.topics.top_words(topic, n).into_iter().map(|w| terms[w as usize].clone()).collect())
    }

    /// Trace rows as dicts; absent values are None.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.trace
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("iter", r.iter)?;
                d.set_item("K", r.k)?;
                d.set_item("loglik", r.loglik)?;
                d.set_item("objective", r.objective)?;
                d.set_item("diversity", r.diversity)?;
                d.set_item("epsilon", r.epsilon)?;
                d.set_item("query_distance", r.query_distance)?;
                d.set_item("closest_topic", r.closest_topic)?;
                d.set_item("closest_terms", r.closest_terms.clone())?;
                d.set_item("mean_delta", r.mean_delta)?;
                d.set_item("spawned", r.spawned)?;
                d.set_item("phase", format!("{:?}", r.phase).to_lowercase())?;
                d.set_item("wall_ms", r.wall_ms)?;
                Ok(d)
            })
            .collect()
    }

    fn trace_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.trace.write_csv(&mut buf).py()?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ModelFile::new(&self.vocab, &self.topics, self.mixes.as_ref(), self.meta.clone()).save(path).py()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = ModelFile::load(path).py()?;
        Ok(Self {
            vocab: file.vocabulary(),
            topics: file.topic_set().py()?,
            mixes: file.mixes.map(DocTopicMix::new),
            trace: RunTrace::default(),
            meta: file.meta,
        })
    }

    /// Held-out perplexity; `corpus` is matched to the model vocabulary by term.
    #[pyo3(signature = (corpus, split = 0.8, seed = 0))]
    fn perplexity(&self, py: Python<'_>, corpus: &PyCorpus, split: f64, seed: u64) -> PyResult<f64> {
        let (aligned, _) = corpus.inner.align_to(&self.vocab).py()?;
        let em = EmConfig::with_seed(seed);
        py.detach(|| nplsa_core::perplexity(&aligned, &self.topics, split, &em)).py()
    }

    fn diversity(&self) -> f64 {
        nplsa_core::autostop::diversity_or_zero(&self.topics)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(algo={}, K={}, terms={})",
            self.meta.algo.as_deref().unwrap_or("?"),
            self.topics.n_topics(),
            self.vocab.len()
        )
    }
}

fn em_config(seed: u64, max_iters: usize, rel_tol: f64) -> PyResult<EmConfig> {
    let em = EmConfig {
        max_iters,
        rel_tol,
        ..EmConfig::with_seed(seed)
    };
    em.validate().py()?;
    Ok(em)
}

/// Fixed-K PLSA.
#[pyfunction]
#[pyo3(signature = (corpus, k, seed, max_iters = 200, rel_tol = 1e-5))]
fn train_plsa(py: Python<'_>, corpus: &PyCorpus, k: usize, seed: u64, max_iters: usize, rel_tol: f64) -> PyResult<PyModel> {
    let em = em_config(seed, max_iters, rel_tol)?;
    let fit = py.detach(|| nplsa_core::train_plsa(&corpus.inner, k, &em)).py()?;
    Ok(PyModel::new(&corpus.inner, fit.topics, fit.mixes, fit.trace, "plsa", seed, None))
}

/// PLSA that spawns a topic from every document whose fit deficit exceeds `epsilon` nats.
#[pyfunction]
#[pyo3(signature = (corpus, epsilon, seed, shuffle = None, max_topics = 1000, max_iters = 200, rel_tol = 1e-5))]
#[allow(clippy::too_many_arguments)]
fn train_nplsa(
    py: Python<'_>,
    corpus: &PyCorpus,
    epsilon: f64,
    seed: u64,
    shuffle: Option<u64>,
    max_topics: usize,
    max_iters: usize,
    rel_tol: f64,
) -> PyResult<PyModel> {
    let cfg = NplsaConfig {
        em: em_config(seed, max_iters, rel_tol)?,
        max_topics,
        shuffle,
    };
    let fit = py.detach(|| nplsa_core::train_nplsa(&corpus.inner, epsilon, &cfg)).py()?;
    Ok(PyModel::new(&corpus.inner, fit.state.topics, fit.state.mixes, fit.trace, "nplsa", seed, Some(epsilon)))
}

fn auto_config(seed: u64, patience: usize, max_k: Option<usize>, lam: f64) -> AutoConfig {
    AutoConfig {
        patience,
        max_k,
        lambda: lam,
        ..AutoConfig::with_seed(seed)
    }
}

/// Grows one topic at a time and keeps the K with the most diverse topics.
#[pyfunction]
#[pyo3(signature = (corpus, seed, patience = 3, max_k = None))]
fn train_auto(py: Python<'_>, corpus: &PyCorpus, seed: u64, patience: usize, max_k: Option<usize>) -> PyResult<PyModel> {
    let cfg = auto_config(seed, patience, max_k, 0.5);
    let fit = py.detach(|| nplsa_core::train_parameter_free(&corpus.inner, &cfg)).py()?;
    Ok(PyModel::new(&corpus.inner, fit.topics, fit.mixes, fit.trace, "auto", seed, None))
}

/// Grows topics until one is closest to the feedback model of `query`.
#[pyfunction]
#[pyo3(signature = (corpus, query, seed, patience = 3, lam = 0.5, max_k = None))]
fn train_query(
    py: Python<'_>,
    corpus: &PyCorpus,
    query: Vec<String>,
    seed: u64,
    patience: usize,
    lam: f64,
    max_k: Option<usize>,
) -> PyResult<PyModel> {
    let cfg = auto_config(seed, patience, max_k, lam);
    let (fit, _) = py
        .detach(|| nplsa_core::train_weakly_supervised(&corpus.inner, &query, &cfg))
        .py()?;
    Ok(PyModel::new(&corpus.inner, fit.topics, fit.mixes, fit.trace, "query", seed, None))
}

/// Synthetic corpus: returns `(corpus, truth_topics, truth_mixes)`.
#[pyfunction]
#[pyo3(signature = (seed, profile = "desk", n_docs = None, doc_len = None, n_topics = None, vocab_size = None, alpha = None, beta = None, min_topic_dist = None))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn generate(
    py: Python<'_>,
    seed: u64,
    profile: &str,
    n_docs: Option<usize>,
    doc_len: Option<usize>,
    n_topics: Option<usize>,
    vocab_size: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    min_topic_dist: Option<f64>,
) -> PyResult<(PyCorpus, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let base = match profile {
        "paper" => SynthConfig::paper(seed),
        "desk" => SynthConfig::desk(seed),
        other => return Err(PyValueError::new_err(format!("unknown profile `{other}`"))),
    };
    let cfg = SynthConfig {
        n_docs: n_docs.unwrap_or(base.n_docs),
        doc_len: doc_len.unwrap_or(base.doc_len),
        n_topics: n_topics.unwrap_or(base.n_topics),
        vocab_size: vocab_size.unwrap_or(base.vocab_size),
        alpha: alpha.unwrap_or(base.alpha),
        beta: beta.unwrap_or(base.beta),
        min_topic_dist: min_topic_dist.unwrap_or(base.min_topic_dist),
        seed,
    };
    let s = py.detach(|| nplsa_core::generate_corpus(&cfg)).py()?;
    Ok((
        PyCorpus { inner: s.corpus },
        s.truth.topics.to_rows(),
        s.truth.mixes.into_inner(),
    ))
}

fn topic_set(rows: Vec<Vec<f64>>) -> PyResult<TopicSet> {
    TopicSet::from_rows(rows).py()
}

/// Mean distance from each learned topic to its nearest truth topic.
#[pyfunction]
fn topic_quality_error(learned: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    nplsa_core::topic_quality_error(&topic_set(learned)?, &topic_set(truth)?).py()
}

/// Mean distance from each truth topic to its nearest learned topic.
#[pyfunction]
fn topic_coverage_error(learned: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    nplsa_core::topic_coverage_error(&topic_set(learned)?, &topic_set(truth)?).py()
}

/// Mean pairwise L2 distance between topics (needs at least two).
#[pyfunction]
fn diversity(topics: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(nplsa_core::diversity(&topic_set(topics)?).py()?.value)
}

#[pymodule]
fn pynplsa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train_plsa, m)?)?;
    m.add_function(wrap_pyfunction!(train_nplsa, m)?)?;
    m.add_function(wrap_pyfunction!(train_auto, m)?)?;
    m.add_function(wrap_pyfunction!(train_query, m)?)?;
    m.add_function(wrap_pyfunction!(topic_quality_error, m)?)?;
    m.add_function(wrap_pyfunction!(topic_coverage_error, m)?)?;
    m.add_function(wrap_pyfunction!(diversity, m)?)?;
    Ok(())
}
