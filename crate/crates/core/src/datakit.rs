//! Data ingestion for corpora, scored pairs, positive pairs, and thesauri,
//! plus a seeded synthetic-data generator that plants known similarity
//! structure for desk-scale experiments.
//!
//! Loaders reject malformed input rather than repairing it, and every error
//! names the offending line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::Thesaurus;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },
    #[error("corpus {path} contains no sentences")]
    EmptyCorpus { path: PathBuf },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("score {score} out of range [0, 5] at line {line}")]
    ScoreOutOfRange { line: usize, score: f64 },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

/// Two sentences plus a human similarity score in [0, 5].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub score: f64,
}

/// Line-per-sentence corpus with stable order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sentences: Vec<String>,
    pub source: PathBuf,
}

fn read_utf8(path: &Path) -> Result<String, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|_| DataError::Encoding {
        path: path.to_path_buf(),
    })
}

/// One sentence per line; blank (whitespace-only) lines skipped; order
/// preserved. Unix and Windows line endings accepted.
pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    let text = read_utf8(path)?;
    let sentences: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    if sentences.is_empty() {
        return Err(DataError::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    Ok(Corpus {
        sentences,
        source: path.to_path_buf(),
    })
}

/// TSV `sent_a<TAB>sent_b<TAB>score` with scores validated into [0, 5].
pub fn load_scored_pairs(path: &Path) -> Result<Vec<ScoredPair>, DataError> {
    let text = read_utf8(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DataError::Parse {
                line: i + 1,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(DataError::Parse {
                line: i + 1,
                reason: "empty sentence".into(),
            });
        }
        let score: f64 = fields[2].trim().parse().map_err(|_| DataError::Parse {
            line: i + 1,
            reason: format!("cannot parse score {:?}", fields[2]),
        })?;
        if !(0.0..=5.0).contains(&score) {
            return Err(DataError::ScoreOutOfRange { line: i + 1, score });
        }
        out.push(ScoredPair {
            sentence_a: fields[0].to_string(),
            sentence_b: fields[1].to_string(),
            score,
        });
    }
    if out.is_empty() {
        return Err(DataError::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

/// TSV `sent_a<TAB>sent_b`, exactly two columns.
pub fn load_positive_pairs(path: &Path) -> Result<Vec<(String, String)>, DataError> {
    let text = read_utf8(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(DataError::Parse {
                line: i + 1,
                reason: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(DataError::Parse {
                line: i + 1,
                reason: "empty sentence".into(),
            });
        }
        out.push((fields[0].to_string(), fields[1].to_string()));
    }
    if out.is_empty() {
        return Err(DataError::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), DataError> {
    let mut out = String::new();
    for s in &corpus.sentences {
        out.push_str(s);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_scored_pairs(path: &Path, pairs: &[ScoredPair]) -> Result<(), DataError> {
    let mut out = String::new();
    for p in pairs {
        writeln!(out, "{}\t{}\t{}", p.sentence_a, p.sentence_b, p.score).expect("string write");
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_positive_pairs(path: &Path, pairs: &[(String, String)]) -> Result<(), DataError> {
    let mut out = String::new();
    for (a, b) in pairs {
        writeln!(out, "{a}\t{b}").expect("string write");
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parameters of the synthetic-corpus generator.
///
/// The vocabulary is partitioned into one token pool per cluster plus a
/// shared pool (half of the vocabulary). Each sentence belongs to a cluster
/// (round-robin) and draws tokens from its own pool with probability
/// `intra_rate`, from the shared pool with probability `inter_rate`, and
/// uniformly from the whole vocabulary otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub clusters: usize,
    pub vocab_size: usize,
    pub sentence_len: (usize, usize),
    pub intra_rate: f64,
    pub inter_rate: f64,
    pub sentences: usize,
    pub scored_pairs: usize,
    pub positive_pairs: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            clusters: 4,
            vocab_size: 400,
            sentence_len: (8, 16),
            intra_rate: 0.6,
            inter_rate: 0.4,
            sentences: 2048,
            scored_pairs: 300,
            positive_pairs: 400,
            seed: 7,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.clusters < 2 {
            return Err(DataError::Spec(format!(
                "need at least 2 clusters, got {}",
                self.clusters
            )));
        }
        let shared = self.vocab_size / 2;
        let per_cluster = (self.vocab_size - shared) / self.clusters;
        if per_cluster < 2 || shared < 1 {
            return Err(DataError::Spec(format!(
                "vocab_size {} too small for {} clusters",
                self.vocab_size, self.clusters
            )));
        }
        if self.sentence_len.0 < 1 || self.sentence_len.0 > self.sentence_len.1 {
            return Err(DataError::Spec(format!(
                "bad sentence length range {:?}",
                self.sentence_len
            )));
        }
        if !(0.0..=1.0).contains(&self.intra_rate)
            || !(0.0..=1.0).contains(&self.inter_rate)
            || self.intra_rate + self.inter_rate > 1.0
        {
            return Err(DataError::Spec(format!(
                "overlap rates must be nonnegative and sum to at most 1, got intra {} inter {}",
                self.intra_rate, self.inter_rate
            )));
        }
        if self.sentences < 2 * self.clusters {
            return Err(DataError::Spec(format!(
                "need at least {} sentences for {} clusters",
                2 * self.clusters,
                self.clusters
            )));
        }
        Ok(())
    }
}

/// Everything the generator emits.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub scored_pairs: Vec<ScoredPair>,
    pub positive_pairs: Vec<(String, String)>,
    pub thesaurus: Thesaurus,
    /// Cluster id per corpus sentence, for diagnostics.
    pub cluster_of: Vec<usize>,
}

/// Cosine similarity between the token-count vectors of two whitespace-split
/// sentences.
pub fn bag_cosine(a: &str, b: &str) -> f64 {
    use std::collections::BTreeMap;
    fn count(s: &str) -> BTreeMap<&str, f64> {
        let mut m: BTreeMap<&str, f64> = BTreeMap::new();
        for t in s.split_whitespace() {
            *m.entry(t).or_insert(0.0) += 1.0;
        }
        m
    }
    let ca = count(a);
    let cb = count(b);
    let mut dot = 0.0;
    for (t, va) in &ca {
        if let Some(vb) = cb.get(t) {
            dot += va * vb;
        }
    }
    let na: f64 = ca.values().map(|v| v * v).sum::<f64>();
    let nb: f64 = cb.values().map(|v| v * v).sum::<f64>();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb).sqrt()
}

/// Generates a clustered corpus with planted scored pairs (same-cluster
/// pairs always score above cross-cluster pairs), within-cluster positive
/// pairs, and a thesaurus mapping tokens to same-pool tokens. Fully
/// determined by the generator seed.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let shared_size = spec.vocab_size / 2;
    let per_cluster = (spec.vocab_size - shared_size) / spec.clusters;
    let shared_start = per_cluster * spec.clusters;
    let vocab_total = shared_start + shared_size;
    let token = |idx: usize| format!("tok{idx:04}");

    // sentences, round-robin over clusters
    let mut sentences = Vec::with_capacity(spec.sentences);
    let mut cluster_of = Vec::with_capacity(spec.sentences);
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); spec.clusters];
    for i in 0..spec.sentences {
        let cluster = i % spec.clusters;
        let len = rng.gen_range(spec.sentence_len.0..=spec.sentence_len.1);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.gen();
            let idx = if u < spec.intra_rate {
                cluster * per_cluster + rng.gen_range(0..per_cluster)
            } else if u < spec.intra_rate + spec.inter_rate {
                shared_start + rng.gen_range(0..shared_size)
            } else {
                rng.gen_range(0..vocab_total)
            };
            words.push(token(idx));
        }
        by_cluster[cluster].push(i);
        cluster_of.push(cluster);
        sentences.push(words.join(" "));
    }

    // scored pairs: alternate same-cluster and cross-cluster; scores are a
    // monotone function of bag-of-token cosine inside disjoint bands
    let mut scored = Vec::with_capacity(spec.scored_pairs);
    for p in 0..spec.scored_pairs {
        let same = p % 2 == 0;
        let (ia, ib) = if same {
            let c = rng.gen_range(0..spec.clusters);
            let members = &by_cluster[c];
            let a = members[rng.gen_range(0..members.len())];
            let mut b = members[rng.gen_range(0..members.len())];
            while b == a {
                b = members[rng.gen_range(0..members.len())];
            }
            (a, b)
        } else {
            let ca = rng.gen_range(0..spec.clusters);
            let mut cb = rng.gen_range(0..spec.clusters);
            while cb == ca {
                cb = rng.gen_range(0..spec.clusters);
            }
            let a = by_cluster[ca][rng.gen_range(0..by_cluster[ca].len())];
            let b = by_cluster[cb][rng.gen_range(0..by_cluster[cb].len())];
            (a, b)
        };
        let sim = bag_cosine(&sentences[ia], &sentences[ib]).clamp(0.0, 1.0);
        let score = if same { 3.5 + 1.5 * sim } else { 1.5 * sim };
        scored.push(ScoredPair {
            sentence_a: sentences[ia].clone(),
            sentence_b: sentences[ib].clone(),
            score,
        });
    }

    // positive pairs sampled within clusters
    let mut positives = Vec::with_capacity(spec.positive_pairs);
    for _ in 0..spec.positive_pairs {
        let c = rng.gen_range(0..spec.clusters);
        let members = &by_cluster[c];
        let a = members[rng.gen_range(0..members.len())];
        let mut b = members[rng.gen_range(0..members.len())];
        while b == a {
            b = members[rng.gen_range(0..members.len())];
        }
        positives.push((sentences[a].clone(), sentences[b].clone()));
    }

    // thesaurus: each token's synonyms are the next tokens of its own pool
    let mut thesaurus = Thesaurus::new();
    let pool_of = |idx: usize| -> (usize, usize) {
        if idx >= shared_start {
            (shared_start, shared_size)
        } else {
            let c = idx / per_cluster;
            (c * per_cluster, per_cluster)
        }
    };
    for idx in 0..vocab_total {
        let (start, size) = pool_of(idx);
        if size < 2 {
            continue;
        }
        let within = idx - start;
        let synonyms: Vec<String> = (1..=3.min(size - 1))
            .map(|k| token(start + (within + k) % size))
            .collect();
        thesaurus.insert(token(idx), synonyms);
    }

    Ok(SynthData {
        corpus: Corpus {
            sentences,
            source: PathBuf::from("<synthetic>"),
        },
        scored_pairs: scored,
        positive_pairs: positives,
        thesaurus,
        cluster_of,
    })
}
