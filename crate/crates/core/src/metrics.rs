//! Embedding-quality analysis: STS-style Spearman evaluation, alignment,
//! uniformity, and rating-stratified cosine-similarity histograms.
//!
//! All metrics use eval-mode, pre-projector embeddings, the same space used
//! for checkpoint selection.

use thiserror::Error;

use crate::datakit::ScoredPair;
use crate::encoder::{EncoderError, Model};
use crate::mathcore::{cosine_similarity, spearman, MathError, ZERO_NORM_EPS};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("bad histogram configuration: {0}")]
    BadHistogram(String),
}

fn normalize(v: &[f64]) -> Result<Vec<f64>, MetricsError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < ZERO_NORM_EPS {
        return Err(MathError::ZeroNorm.into());
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Spearman correlation between model cosine similarities and human scores.
pub fn sts_eval(model: &Model, pairs: &[ScoredPair]) -> Result<f64, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFew {
            what: "scored pairs",
            need: 2,
            got: pairs.len(),
        });
    }
    let mut sims = Vec::with_capacity(pairs.len());
    let mut scores = Vec::with_capacity(pairs.len());
    for p in pairs {
        let ea = model.embed(&p.sentence_a)?;
        let eb = model.embed(&p.sentence_b)?;
        sims.push(cosine_similarity(&ea, &eb)?);
        scores.push(p.score);
    }
    Ok(spearman(&sims, &scores)?)
}

/// Mean squared distance between the L2-normalized embeddings of positive
/// pairs (exponent 2); lower is better.
pub fn alignment_of(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::TooFew {
            what: "positive pairs",
            need: 1,
            got: 0,
        });
    }
    let mut acc = 0.0;
    for (a, b) in pairs {
        let fa = normalize(a)?;
        let fb = normalize(b)?;
        acc += squared_distance(&fa, &fb);
    }
    Ok(acc / pairs.len() as f64)
}

pub fn alignment(model: &Model, positive_pairs: &[(String, String)]) -> Result<f64, MetricsError> {
    let mut embedded = Vec::with_capacity(positive_pairs.len());
    for (a, b) in positive_pairs {
        embedded.push((model.embed(a)?, model.embed(b)?));
    }
    alignment_of(&embedded)
}

/// Log of the mean Gaussian potential exp(-t |f(x_i) - f(x_j)|^2) with
/// t = 2 over all ordered distinct pairs; at most 0, lower is better.
pub fn uniformity_of(embeddings: &[Vec<f64>]) -> Result<f64, MetricsError> {
    const T: f64 = 2.0;
    if embeddings.len() < 2 {
        return Err(MetricsError::TooFew {
            what: "sentences",
            need: 2,
            got: embeddings.len(),
        });
    }
    let normalized: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| normalize(e))
        .collect::<Result<_, _>>()?;
    let n = normalized.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += (-T * squared_distance(&normalized[i], &normalized[j])).exp();
            }
        }
    }
    Ok((acc / (n * (n - 1)) as f64).ln())
}

pub fn uniformity(model: &Model, sentences: &[String]) -> Result<f64, MetricsError> {
    let embeddings: Vec<Vec<f64>> = sentences
        .iter()
        .map(|s| model.embed(s))
        .collect::<Result<_, _>>()?;
    uniformity_of(&embeddings)
}

/// Rating-stratified histogram of model cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    /// Score bucket edges over [0, 5]; buckets are right-exclusive except
    /// the last.
    pub score_edges: Vec<f64>,
    /// Number of equal-width similarity bins over [-1, 1].
    pub sim_bins: usize,
    /// counts[bucket][bin]
    pub counts: Vec<Vec<u64>>,
    /// Pairs per score bucket.
    pub bucket_counts: Vec<u64>,
}

impl HistogramReport {
    pub fn sim_bin_edges(&self) -> Vec<f64> {
        let w = 2.0 / self.sim_bins as f64;
        (0..=self.sim_bins).map(|i| -1.0 + w * i as f64).collect()
    }

    /// CSV with one row per (bucket, bin): edges and count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score_lo,score_hi,sim_lo,sim_hi,count\n");
        let edges = self.sim_bin_edges();
        for (b, bins) in self.counts.iter().enumerate() {
            for (k, count) in bins.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.score_edges[b],
                    self.score_edges[b + 1],
                    edges[k],
                    edges[k + 1],
                    count
                ));
            }
        }
        out
    }
}

/// Assigns each pair to the score bucket containing its human score and bins
/// the model cosine similarity over [-1, 1].
pub fn similarity_histogram(
    model: &Model,
    pairs: &[ScoredPair],
    score_edges: &[f64],
    sim_bins: usize,
) -> Result<HistogramReport, MetricsError> {
    validate_edges(score_edges, sim_bins)?;
    let n_buckets = score_edges.len() - 1;
    let mut counts = vec![vec![0u64; sim_bins]; n_buckets];
    let mut bucket_counts = vec![0u64; n_buckets];
    for p in pairs {
        let ea = model.embed(&p.sentence_a)?;
        let eb = model.embed(&p.sentence_b)?;
        let sim = cosine_similarity(&ea, &eb)?;
        let bucket = bucket_index(score_edges, p.score);
        let bin = sim_bin_index(sim, sim_bins);
        counts[bucket][bin] += 1;
        bucket_counts[bucket] += 1;
    }
    Ok(HistogramReport {
        score_edges: score_edges.to_vec(),
        sim_bins,
        counts,
        bucket_counts,
    })
}

fn validate_edges(score_edges: &[f64], sim_bins: usize) -> Result<(), MetricsError> {
    if score_edges.len() < 2 {
        return Err(MetricsError::BadHistogram(
            "need at least two score edges".into(),
        ));
    }
    if sim_bins < 1 {
        return Err(MetricsError::BadHistogram("need at least one sim bin".into()));
    }
    if !score_edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricsError::BadHistogram(
            "score edges must be strictly increasing".into(),
        ));
    }
    if score_edges[0] != 0.0 || *score_edges.last().expect("nonempty") != 5.0 {
        return Err(MetricsError::BadHistogram(
            "score edges must span [0, 5]".into(),
        ));
    }
    Ok(())
}

/// Bucket and bin assignment for one (score, similarity) pair: the score
/// bucket is right-exclusive except the last, similarity bins partition
/// [-1, 1].
pub fn bucket_and_bin(score_edges: &[f64], score: f64, sim: f64, sim_bins: usize) -> (usize, usize) {
    (bucket_index(score_edges, score), sim_bin_index(sim, sim_bins))
}

/// Right-exclusive buckets except the last, which includes its upper edge.
pub(crate) fn bucket_index(edges: &[f64], score: f64) -> usize {
    let n_buckets = edges.len() - 1;
    for b in 0..n_buckets {
        if score >= edges[b] && (score < edges[b + 1] || b == n_buckets - 1) {
            return b;
        }
    }
    // score below the first edge can't occur for validated [0, 5] scores
    0
}

pub(crate) fn sim_bin_index(sim: f64, bins: usize) -> usize {
    let idx = ((sim + 1.0) / 2.0 * bins as f64).floor() as usize;
    idx.min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{synth_generate, SynthSpec};
    use crate::encoder::{EncoderDims, EncoderParams, Model, ModelParams, ProjectorParams, Vocab};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> Model {
        let vocab = Vocab::build(
            (0..40)
                .map(|i| format!("tok{i:04}"))
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = EncoderDims {
            d_tok: 12,
            hidden: vec![16],
            d_e: 8,
            proj_dim: 16,
        };
        let encoder = EncoderParams::init(vocab.len(), &dims, 0.0, &mut rng);
        let projector = ProjectorParams::init_simcse(dims.d_e, &mut rng);
        Model {
            vocab,
            params: ModelParams { encoder, projector },
        }
    }

    fn synth_model(seed: u64, spec: &SynthSpec) -> Model {
        let data = synth_generate(spec).unwrap();
        let mut tokens = Vec::new();
        for s in &data.corpus.sentences {
            tokens.extend(s.split_whitespace().map(str::to_string));
        }
        let vocab = Vocab::build(tokens.iter().map(String::as_str));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = EncoderDims {
            d_tok: 16,
            hidden: vec![24],
            d_e: 12,
            proj_dim: 24,
        };
        let encoder = EncoderParams::init(vocab.len(), &dims, 0.0, &mut rng);
        let projector = ProjectorParams::init_simcse(dims.d_e, &mut rng);
        Model {
            vocab,
            params: ModelParams { encoder, projector },
        }
    }

    #[test]
    fn sts_eval_all_tied_on_identical_sentences() {
        let model = tiny_model(1);
        let pairs: Vec<ScoredPair> = (0..5)
            .map(|i| ScoredPair {
                sentence_a: format!("tok{i:04} tok{:04}", i + 1),
                sentence_b: format!("tok{i:04} tok{:04}", i + 1),
                score: i as f64,
            })
            .collect();
        assert!(matches!(
            sts_eval(&model, &pairs),
            Err(MetricsError::Math(MathError::AllTied))
        ));
    }

    #[test]
    fn sts_eval_perfect_when_scores_follow_model_similarity() {
        let model = tiny_model(2);
        // build pairs, measure the model's own similarities, then assign
        // scores as a strictly increasing function of them
        let mut raw: Vec<(String, String)> = Vec::new();
        for i in 0..8 {
            raw.push((
                format!("tok{:04} tok{:04} tok{:04}", i, (i + 3) % 40, (i * 7) % 40),
                format!("tok{:04} tok{:04}", (i + 1) % 40, (i * 5) % 40),
            ));
        }
        let mut sims: Vec<f64> = Vec::new();
        for (a, b) in &raw {
            let ea = model.embed(a).unwrap();
            let eb = model.embed(b).unwrap();
            sims.push(cosine_similarity(&ea, &eb).unwrap());
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| sims[a].partial_cmp(&sims[b]).unwrap());
        let mut pairs = Vec::new();
        for (rank, &idx) in order.iter().enumerate() {
            pairs.push(ScoredPair {
                sentence_a: raw[idx].0.clone(),
                sentence_b: raw[idx].1.clone(),
                score: rank as f64 * 5.0 / (raw.len() - 1) as f64,
            });
        }
        let rho = sts_eval(&model, &pairs).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn sts_eval_untrained_model_shows_no_signal() {
        // weak-signal instance: shared tokens dominate, so an untrained
        // encoder's similarities are mostly noise
        let spec = SynthSpec {
            clusters: 4,
            vocab_size: 96,
            sentence_len: (4, 7),
            intra_rate: 0.05,
            inter_rate: 0.95,
            sentences: 160,
            scored_pairs: 200,
            positive_pairs: 8,
            seed: 33,
        };
        let data = synth_generate(&spec).unwrap();
        for seed in 0..20 {
            let model = synth_model(seed, &spec);
            let rho = sts_eval(&model, &data.scored_pairs).unwrap();
            assert!(rho.abs() < 0.3, "seed {seed}: |rho| = {}", rho.abs());
        }
    }

    #[test]
    fn sts_eval_invariant_under_increasing_score_transform() {
        let spec = SynthSpec {
            sentences: 64,
            scored_pairs: 30,
            positive_pairs: 8,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        let model = synth_model(12, &spec);
        let base = sts_eval(&model, &data.scored_pairs).unwrap();
        let transformed: Vec<ScoredPair> = data
            .scored_pairs
            .iter()
            .map(|p| ScoredPair {
                sentence_a: p.sentence_a.clone(),
                sentence_b: p.sentence_b.clone(),
                // strictly increasing map of [0, 5] into [0, 5]
                score: 5.0 * (p.score / 5.0).powi(3),
            })
            .collect();
        let after = sts_eval(&model, &transformed).unwrap();
        assert_eq!(base, after);
    }

    #[test]
    fn alignment_zero_for_identical_pairs() {
        let model = tiny_model(3);
        let pairs = vec![
            ("tok0001 tok0002".to_string(), "tok0001 tok0002".to_string()),
            ("tok0005".to_string(), "tok0005".to_string()),
        ];
        assert_eq!(alignment(&model, &pairs).unwrap(), 0.0);
    }

    #[test]
    fn alignment_antipodal_pair_is_four() {
        let u = vec![0.6, 0.8, 0.0];
        let v: Vec<f64> = u.iter().map(|x| -x).collect();
        let got = alignment_of(&[(u, v)]).unwrap();
        assert!((got - 4.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..50)
            .map(|_| {
                let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (a, b)
            })
            .collect();
        let got = alignment_of(&pairs).unwrap();
        // scalar reimplementation
        let mut acc = 0.0;
        for (a, b) in &pairs {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut d2 = 0.0;
            for i in 0..a.len() {
                let d = a[i] / na - b[i] / nb;
                d2 += d * d;
            }
            acc += d2;
        }
        let expect = acc / pairs.len() as f64;
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn uniformity_identical_embeddings_is_zero() {
        let e = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(uniformity_of(&e).unwrap(), 0.0);
    }

    #[test]
    fn uniformity_antipodal_is_minus_eight() {
        let e = vec![vec![0.0, 3.0], vec![0.0, -3.0]];
        let got = uniformity_of(&e).unwrap();
        assert!((got + 8.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn uniformity_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let embeddings: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let got = uniformity_of(&embeddings).unwrap();
        let normed: Vec<Vec<f64>> = embeddings
            .iter()
            .map(|e| {
                let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                e.iter().map(|x| x / n).collect()
            })
            .collect();
        let n = normed.len();
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d2: f64 = normed[i]
                        .iter()
                        .zip(&normed[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    acc += (-2.0 * d2).exp();
                    cnt += 1.0;
                }
            }
        }
        let expect = (acc / cnt).ln();
        assert!((got - expect).abs() < 1e-10);
        assert!(got <= 0.0);
    }

    #[test]
    fn metrics_invariant_under_positive_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let embeddings: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| e.iter().map(|x| x * (1.0 + i as f64)).collect())
            .collect();
        let u1 = uniformity_of(&embeddings).unwrap();
        let u2 = uniformity_of(&scaled).unwrap();
        assert!((u1 - u2).abs() < 1e-10);
        let pairs: Vec<_> = embeddings
            .iter()
            .zip(&scaled)
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        let pairs_scaled: Vec<_> = pairs
            .iter()
            .map(|(a, b)| {
                (
                    a.iter().map(|x| x * 7.0).collect::<Vec<f64>>(),
                    b.iter().map(|x| x * 0.1).collect::<Vec<f64>>(),
                )
            })
            .collect();
        let a1 = alignment_of(&pairs).unwrap();
        let a2 = alignment_of(&pairs_scaled).unwrap();
        assert!((a1 - a2).abs() < 1e-10);
        assert!(a1 >= 0.0);
    }

    #[test]
    fn histogram_boundary_scores_land_in_final_bucket() {
        let model = tiny_model(7);
        let pairs: Vec<ScoredPair> = (0..6)
            .map(|i| ScoredPair {
                sentence_a: format!("tok{i:04} tok{:04}", (i + 2) % 40),
                sentence_b: format!("tok{:04}", (i + 9) % 40),
                score: 5.0,
            })
            .collect();
        let edges = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let report = similarity_histogram(&model, &pairs, &edges, 10).unwrap();
        assert_eq!(report.bucket_counts, vec![0, 0, 0, 0, 6]);
    }

    #[test]
    fn histogram_counts_partition_pairs() {
        let spec = SynthSpec {
            sentences: 120,
            scored_pairs: 200,
            positive_pairs: 8,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        let model = synth_model(8, &spec);
        let edges = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let report = similarity_histogram(&model, &data.scored_pairs, &edges, 40).unwrap();
        let total: u64 = report.counts.iter().flatten().sum();
        assert_eq!(total, 200);
        for (b, bins) in report.counts.iter().enumerate() {
            assert_eq!(bins.iter().sum::<u64>(), report.bucket_counts[b]);
        }
    }

    #[test]
    fn histogram_matches_scalar_binning_oracle() {
        let spec = SynthSpec {
            sentences: 120,
            scored_pairs: 200,
            positive_pairs: 8,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        let model = synth_model(9, &spec);
        let edges = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let bins = 40usize;
        let report = similarity_histogram(&model, &data.scored_pairs, &edges, bins).unwrap();
        // brute-force binning
        let mut expect = vec![vec![0u64; bins]; 5];
        for p in &data.scored_pairs {
            let ea = model.embed(&p.sentence_a).unwrap();
            let eb = model.embed(&p.sentence_b).unwrap();
            let sim = cosine_similarity(&ea, &eb).unwrap();
            let mut bucket = 4;
            for b in 0..5 {
                if p.score >= edges[b] && p.score < edges[b + 1] {
                    bucket = b;
                    break;
                }
            }
            let mut bin = bins - 1;
            for k in 0..bins {
                let lo = -1.0 + 2.0 * k as f64 / bins as f64;
                let hi = -1.0 + 2.0 * (k + 1) as f64 / bins as f64;
                if sim >= lo && (sim < hi || k == bins - 1) {
                    bin = k;
                    break;
                }
            }
            expect[bucket][bin] += 1;
        }
        assert_eq!(report.counts, expect);
    }

    #[test]
    fn histogram_rejects_bad_edges() {
        let model = tiny_model(10);
        let pairs = [ScoredPair {
            sentence_a: "tok0001".into(),
            sentence_b: "tok0002".into(),
            score: 1.0,
        }];
        assert!(similarity_histogram(&model, &pairs, &[0.0, 5.0], 0).is_err());
        assert!(similarity_histogram(&model, &pairs, &[0.0, 3.0, 2.0, 5.0], 4).is_err());
        assert!(similarity_histogram(&model, &pairs, &[0.5, 5.0], 4).is_err());
        assert!(similarity_histogram(&model, &pairs, &[0.0, 4.0], 4).is_err());
    }

    #[test]
    fn histogram_csv_shape() {
        let model = tiny_model(11);
        let pairs = [ScoredPair {
            sentence_a: "tok0001 tok0003".into(),
            sentence_b: "tok0002".into(),
            score: 2.5,
        }];
        let report = similarity_histogram(&model, &pairs, &[0.0, 2.5, 5.0], 4).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "score_lo,score_hi,sim_lo,sim_hi,count");
        assert_eq!(lines.len(), 1 + 2 * 4);
    }
}
