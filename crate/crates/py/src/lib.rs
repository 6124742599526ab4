//! Python bindings for the main types and operations: the three objectives
//! with analytic gradients, the batch kernels, augmentations, the synthetic
//! generator, file-driven training, and checkpoint evaluation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dimcon::augment::Thesaurus;
use dimcon::datakit::{self, ScoredPair, SynthSpec};
use dimcon::encoder;
use dimcon::losses::{self, BarlowConfig, SimCseConfig, VicRegConfig};
use dimcon::mathcore::{self, RealMatrix};
use dimcon::metrics;
use dimcon::trainer::{self, AugmentKind, TrainData};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<RealMatrix> {
    RealMatrix::from_rows(&rows).map_err(err)
}

fn from_matrix(m: &RealMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    mathcore::cosine_similarity(&a, &b).map_err(err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    mathcore::spearman(&x, &y).map_err(err)
}

#[pyfunction]
fn cross_correlation(za: Vec<Vec<f64>>, zb: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let rho = mathcore::cross_correlation(&to_matrix(za)?, &to_matrix(zb)?).map_err(err)?;
    let d = rho.dim();
    Ok((0..d)
        .map(|i| (0..d).map(|j| rho.get(i, j)).collect())
        .collect())
}

#[pyfunction]
fn covariance(z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let c = mathcore::covariance(&to_matrix(z)?).map_err(err)?;
    let d = c.dim();
    Ok((0..d)
        .map(|i| (0..d).map(|j| c.get(i, j)).collect())
        .collect())
}

#[pyfunction]
fn hinge(x: f64) -> f64 {
    losses::hinge(x)
}

type LossTuple = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

#[pyfunction]
#[pyo3(signature = (za, zb, temperature = 0.05))]
fn simcse_loss(za: Vec<Vec<f64>>, zb: Vec<Vec<f64>>, temperature: f64) -> PyResult<LossTuple> {
    let res = losses::simcse_loss(
        &to_matrix(za)?,
        &to_matrix(zb)?,
        &SimCseConfig { temperature },
    )
    .map_err(err)?;
    Ok((res.value, from_matrix(&res.grad_a), from_matrix(&res.grad_b)))
}

#[pyfunction]
#[pyo3(signature = (za, zb, lambda_bt = 5e-3))]
fn barlow_twins_loss(za: Vec<Vec<f64>>, zb: Vec<Vec<f64>>, lambda_bt: f64) -> PyResult<LossTuple> {
    let res = losses::barlow_twins_loss(
        &to_matrix(za)?,
        &to_matrix(zb)?,
        &BarlowConfig { lambda_bt },
    )
    .map_err(err)?;
    Ok((res.value, from_matrix(&res.grad_a), from_matrix(&res.grad_b)))
}

#[pyfunction]
#[pyo3(signature = (za, zb, lambda_i = 1.0, lambda_v = 25.0, lambda_c = 0.04, eps = 1e-4))]
fn vicreg_loss(
    za: Vec<Vec<f64>>,
    zb: Vec<Vec<f64>>,
    lambda_i: f64,
    lambda_v: f64,
    lambda_c: f64,
    eps: f64,
) -> PyResult<LossTuple> {
    let res = losses::vicreg_loss(
        &to_matrix(za)?,
        &to_matrix(zb)?,
        &VicRegConfig {
            lambda_i,
            lambda_v,
            lambda_c,
            eps,
        },
    )
    .map_err(err)?;
    Ok((res.value, from_matrix(&res.grad_a), from_matrix(&res.grad_b)))
}

#[pyfunction]
fn shuffle_tokens(tokens: Vec<String>, p_s: f64, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dimcon::augment::shuffle_tokens(&tokens, p_s, &mut rng)
}

#[pyfunction]
fn eda_augment(
    tokens: Vec<String>,
    alpha: f64,
    thesaurus: HashMap<String, Vec<String>>,
    seed: u64,
) -> Vec<String> {
    let mut th = Thesaurus::new();
    for (word, synonyms) in thesaurus {
        th.insert(word, synonyms);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dimcon::augment::eda_augment(&tokens, alpha, &th, &mut rng)
}

#[pyfunction]
#[pyo3(signature = (
    clusters = 4,
    vocab_size = 400,
    len_lo = 8,
    len_hi = 16,
    intra_rate = 0.6,
    inter_rate = 0.4,
    sentences = 2048,
    scored_pairs = 300,
    positive_pairs = 400,
    seed = 7,
))]
#[allow(clippy::too_many_arguments)]
fn synth_generate(
    py: Python<'_>,
    clusters: usize,
    vocab_size: usize,
    len_lo: usize,
    len_hi: usize,
    intra_rate: f64,
    inter_rate: f64,
    sentences: usize,
    scored_pairs: usize,
    positive_pairs: usize,
    seed: u64,
) -> PyResult<PyObject> {
    let spec = SynthSpec {
        clusters,
        vocab_size,
        sentence_len: (len_lo, len_hi),
        intra_rate,
        inter_rate,
        sentences,
        scored_pairs,
        positive_pairs,
        seed,
    };
    let data = datakit::synth_generate(&spec).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("sentences", data.corpus.sentences)?;
    out.set_item(
        "scored_pairs",
        data.scored_pairs
            .iter()
            .map(|p| (p.sentence_a.clone(), p.sentence_b.clone(), p.score))
            .collect::<Vec<_>>(),
    )?;
    out.set_item("positive_pairs", data.positive_pairs)?;
    let th = PyDict::new_bound(py);
    for word in data.thesaurus.words() {
        th.set_item(word, data.thesaurus.synonyms(word).unwrap().to_vec())?;
    }
    out.set_item("thesaurus", th)?;
    out.set_item("cluster_of", data.cluster_of)?;
    Ok(out.into())
}

/// Trains from the same files the command line uses and writes the same
/// outputs; returns (best_dev_spearman, best_step).
#[pyfunction]
fn train_files(
    config_path: PathBuf,
    corpus_path: PathBuf,
    dev_path: PathBuf,
    out_dir: PathBuf,
) -> PyResult<(f64, u64)> {
    let text = std::fs::read_to_string(&config_path).map_err(err)?;
    let (cfg, thesaurus_path) =
        dimcon::cli::parse_train_config(&config_path, &text).map_err(err)?;
    let thesaurus = match &thesaurus_path {
        Some(p) => Thesaurus::load(p).map_err(err)?,
        None => Thesaurus::new(),
    };
    let dev = datakit::load_scored_pairs(&dev_path).map_err(err)?;
    let outcome = if cfg.augment == AugmentKind::Supervised {
        let pairs = datakit::load_positive_pairs(&corpus_path).map_err(err)?;
        trainer::train(&cfg, TrainData::Pairs(&pairs), &dev, &thesaurus).map_err(err)?
    } else {
        let corpus = datakit::load_corpus(&corpus_path).map_err(err)?;
        trainer::train(&cfg, TrainData::Corpus(&corpus.sentences), &dev, &thesaurus).map_err(err)?
    };
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    outcome
        .model
        .save(&out_dir.join("checkpoint.dimcon"))
        .map_err(err)?;
    std::fs::write(out_dir.join("history.csv"), outcome.history.to_csv()).map_err(err)?;
    Ok((outcome.history.best_dev_spearman, outcome.history.best_step))
}

/// A trained checkpoint with its vocabulary, evaluated in eval mode on
/// pre-projector embeddings.
#[pyclass]
struct Model {
    inner: encoder::Model,
}

fn scored(pairs: Vec<(String, String, f64)>) -> Vec<ScoredPair> {
    pairs
        .into_iter()
        .map(|(sentence_a, sentence_b, score)| ScoredPair {
            sentence_a,
            sentence_b,
            score,
        })
        .collect()
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(checkpoint_path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: encoder::Model::load(Path::new(&checkpoint_path)).map_err(err)?,
        })
    }

    fn embed(&self, text: &str) -> PyResult<Vec<f64>> {
        self.inner.embed(text).map_err(err)
    }

    fn sts_eval(&self, pairs: Vec<(String, String, f64)>) -> PyResult<f64> {
        metrics::sts_eval(&self.inner, &scored(pairs)).map_err(err)
    }

    fn alignment(&self, pairs: Vec<(String, String)>) -> PyResult<f64> {
        metrics::alignment(&self.inner, &pairs).map_err(err)
    }

    fn uniformity(&self, sentences: Vec<String>) -> PyResult<f64> {
        metrics::uniformity(&self.inner, &sentences).map_err(err)
    }

    fn vocab_size(&self) -> usize {
        self.inner.vocab.len()
    }
}

#[pymodule]
fn dimcon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(covariance, m)?)?;
    m.add_function(wrap_pyfunction!(hinge, m)?)?;
    m.add_function(wrap_pyfunction!(simcse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(barlow_twins_loss, m)?)?;
    m.add_function(wrap_pyfunction!(vicreg_loss, m)?)?;
    m.add_function(wrap_pyfunction!(shuffle_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(eda_augment, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(train_files, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
