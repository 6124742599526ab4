//! Token-embedding + mean-pooling + MLP sentence encoder with seeded
//! dropout, two projector-head variants, and reverse-mode gradient
//! propagation to every parameter array.
//!
//! The encoder stands behind a forward/backward interface so that a larger
//! model can be slotted in without touching the objectives or the trainer.
//! Evaluation embeddings are the pre-projector output `e`; the projector is
//! discarded at evaluation time.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mathcore::RealMatrix;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("sentence is empty after tokenization")]
    EmptySentence,
    #[error("forward state mismatch: {0}")]
    StateMismatch(String),
    #[error("batch of {rows} rows is too small for batch statistics, need at least 2")]
    BatchTooSmall { rows: usize },
    #[error("embedding dim mismatch: batch has {got} columns, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected DIMCON1")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("vocabulary file missing token {0:?}")]
    MissingUnk(String),
}

/// Forward mode: train applies dropout and batch statistics, eval is
/// deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const MAGIC: &[u8; 7] = b"DIMCON1";
pub const UNK_TOKEN: &str = "<unk>";
pub const VOCAB_FILE: &str = "vocab.txt";

/// Splits text into lowercased alphanumeric runs; punctuation and whitespace
/// separate tokens.
pub fn split_text(text: &str) -> Result<Vec<String>, EncoderError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    if tokens.is_empty() {
        return Err(EncoderError::EmptySentence);
    }
    Ok(tokens)
}

/// Dense token -> id map with a reserved unknown token.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
}

impl Vocab {
    /// Builds a vocabulary from an iterator of tokens: unique tokens sorted,
    /// with the unknown token at id 0.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut uniq: Vec<&str> = tokens.into_iter().filter(|t| *t != UNK_TOKEN).collect();
        uniq.sort_unstable();
        uniq.dedup();
        let mut all = Vec::with_capacity(uniq.len() + 1);
        all.push(UNK_TOKEN.to_string());
        all.extend(uniq.into_iter().map(str::to_string));
        Self::from_tokens(all).expect("unk inserted above")
    }

    /// Builds a vocabulary from an explicit token list; ids are positions.
    /// The list must contain the unknown token exactly once.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CheckpointError> {
        let mut index = HashMap::with_capacity(tokens.len());
        let mut unk = None;
        for (i, t) in tokens.iter().enumerate() {
            if t == UNK_TOKEN {
                unk = Some(i as u32);
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CheckpointError::Corrupt(format!("duplicate token {t:?}")));
            }
        }
        let unk = unk.ok_or_else(|| CheckpointError::MissingUnk(UNK_TOKEN.to_string()))?;
        Ok(Self { tokens, index, unk })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Token-per-line text file; id equals line index.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Self::from_tokens(tokens)
    }
}

/// Lowercased, punctuation-split token ids; unknown tokens map to UNK.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<Vec<u32>, EncoderError> {
    Ok(split_text(text)?.iter().map(|t| vocab.id(t)).collect())
}

/// Maps pre-split token strings to ids.
pub fn lookup_tokens(tokens: &[String], vocab: &Vocab) -> Result<Vec<u32>, EncoderError> {
    if tokens.is_empty() {
        return Err(EncoderError::EmptySentence);
    }
    Ok(tokens.iter().map(|t| vocab.id(t)).collect())
}

/// Fully-connected layer, weight stored row-major as out x in.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            weight: RealMatrix::from_vec(out_dim, in_dim, data).expect("valid init"),
            bias: vec![0.0; out_dim],
        }
    }

    fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.out_dim() {
            let w = self.weight.row(r);
            let mut acc = self.bias[r];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Per-feature batch normalization with running statistics.
///
/// Normalization uses population (1/N) batch variance; running statistics
/// track the same quantities with the configured momentum.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// Encoder hyperparameters: the layer chain is
/// d_tok -> hidden[0] -> ... -> hidden[last] -> d_e, with ReLU on every
/// hidden layer and a linear output; the projector widens to proj_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDims {
    pub d_tok: usize,
    pub hidden: Vec<usize>,
    pub d_e: usize,
    pub proj_dim: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            d_tok: 64,
            hidden: vec![128],
            d_e: 64,
            proj_dim: 256,
        }
    }
}

/// Token-embedding table plus MLP layers and the dropout probability.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub embedding: RealMatrix,
    pub layers: Vec<Linear>,
    pub dropout: f64,
}

impl EncoderParams {
    pub fn init(vocab_size: usize, dims: &EncoderDims, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&dropout), "dropout must be in [0, 1)");
        let emb: Vec<f64> = (0..vocab_size * dims.d_tok)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let mut widths = vec![dims.d_tok];
        widths.extend_from_slice(&dims.hidden);
        widths.push(dims.d_e);
        let mut layers: Vec<Linear> = widths
            .windows(2)
            .map(|w| Linear::init(w[1], w[0], rng))
            .collect();
        // the output bias starts away from the origin, so initial sentence
        // embeddings concentrate in a narrow cone (the anisotropic starting
        // geometry of the encoders this one stands in for)
        if let Some(out_layer) = layers.last_mut() {
            for b in &mut out_layer.bias {
                *b = rng.gen_range(0.5..1.5);
            }
        }
        Self {
            embedding: RealMatrix::from_vec(vocab_size, dims.d_tok, emb).expect("valid init"),
            layers,
            dropout,
        }
    }

    pub fn d_e(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim()
    }

    pub fn d_tok(&self) -> usize {
        self.embedding.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }
}

/// Projector head: one tanh linear layer, or the 3-layer widening map with
/// batch normalization and ReLU.
#[derive(Debug, Clone)]
pub enum ProjectorParams {
    SimcseHead {
        head: Linear,
    },
    DimconHead {
        lin1: Linear,
        bn1: BatchNorm,
        lin2: Linear,
        bn2: BatchNorm,
        lin3: Linear,
    },
}

impl ProjectorParams {
    pub fn init_simcse(d_e: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::SimcseHead {
            head: Linear::init(d_e, d_e, rng),
        }
    }

    pub fn init_dimcon(d_e: usize, proj_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::DimconHead {
            lin1: Linear::init(proj_dim, d_e, rng),
            bn1: BatchNorm::new(proj_dim),
            lin2: Linear::init(proj_dim, proj_dim, rng),
            bn2: BatchNorm::new(proj_dim),
            lin3: Linear::init(proj_dim, proj_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Self::SimcseHead { head } => head.in_dim(),
            Self::DimconHead { lin1, .. } => lin1.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::SimcseHead { head } => head.out_dim(),
            Self::DimconHead { lin3, .. } => lin3.out_dim(),
        }
    }
}

/// Encoder plus projector: everything a training step updates.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub projector: ProjectorParams,
}

impl ModelParams {
    /// Trainable arrays in a fixed traversal order shared with
    /// [`GradientSet`] and the optimizer state.
    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        out.push(("encoder.embedding".into(), self.encoder.embedding.data()));
        for (i, l) in self.encoder.layers.iter().enumerate() {
            out.push((format!("encoder.layer{i}.weight"), l.weight.data()));
            out.push((format!("encoder.layer{i}.bias"), &l.bias));
        }
        match &self.projector {
            ProjectorParams::SimcseHead { head } => {
                out.push(("projector.head.weight".into(), head.weight.data()));
                out.push(("projector.head.bias".into(), &head.bias));
            }
            ProjectorParams::DimconHead {
                lin1,
                bn1,
                lin2,
                bn2,
                lin3,
            } => {
                out.push(("projector.lin1.weight".into(), lin1.weight.data()));
                out.push(("projector.lin1.bias".into(), &lin1.bias));
                out.push(("projector.bn1.gamma".into(), &bn1.gamma));
                out.push(("projector.bn1.beta".into(), &bn1.beta));
                out.push(("projector.lin2.weight".into(), lin2.weight.data()));
                out.push(("projector.lin2.bias".into(), &lin2.bias));
                out.push(("projector.bn2.gamma".into(), &bn2.gamma));
                out.push(("projector.bn2.beta".into(), &bn2.beta));
                out.push(("projector.lin3.weight".into(), lin3.weight.data()));
                out.push(("projector.lin3.bias".into(), &lin3.bias));
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push((
            "encoder.embedding".into(),
            self.encoder.embedding.data_mut(),
        ));
        for (i, l) in self.encoder.layers.iter_mut().enumerate() {
            out.push((format!("encoder.layer{i}.weight"), l.weight.data_mut()));
            out.push((format!("encoder.layer{i}.bias"), l.bias.as_mut_slice()));
        }
        match &mut self.projector {
            ProjectorParams::SimcseHead { head } => {
                out.push(("projector.head.weight".into(), head.weight.data_mut()));
                out.push(("projector.head.bias".into(), head.bias.as_mut_slice()));
            }
            ProjectorParams::DimconHead {
                lin1,
                bn1,
                lin2,
                bn2,
                lin3,
            } => {
                out.push(("projector.lin1.weight".into(), lin1.weight.data_mut()));
                out.push(("projector.lin1.bias".into(), lin1.bias.as_mut_slice()));
                out.push(("projector.bn1.gamma".into(), bn1.gamma.as_mut_slice()));
                out.push(("projector.bn1.beta".into(), bn1.beta.as_mut_slice()));
                out.push(("projector.lin2.weight".into(), lin2.weight.data_mut()));
                out.push(("projector.lin2.bias".into(), lin2.bias.as_mut_slice()));
                out.push(("projector.bn2.gamma".into(), bn2.gamma.as_mut_slice()));
                out.push(("projector.bn2.beta".into(), bn2.beta.as_mut_slice()));
                out.push(("projector.lin3.weight".into(), lin3.weight.data_mut()));
                out.push(("projector.lin3.bias".into(), lin3.bias.as_mut_slice()));
            }
        }
        out
    }
}

/// One gradient array per trainable parameter array, same shapes, in the
/// same traversal order as [`ModelParams::trainable`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    names: Vec<String>,
    grads: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let mut names = Vec::new();
        let mut grads = Vec::new();
        for (name, data) in params.trainable() {
            names.push(name);
            grads.push(vec![0.0; data.len()]);
        }
        Self { names, grads }
    }

    /// Builds a gradient set from explicit arrays in traversal order.
    pub fn from_arrays(params: &ModelParams, arrays: Vec<Vec<f64>>) -> Self {
        let template = Self::zeros_like(params);
        assert_eq!(template.grads.len(), arrays.len(), "array count mismatch");
        for (t, a) in template.grads.iter().zip(&arrays) {
            assert_eq!(t.len(), a.len(), "array length mismatch");
        }
        Self {
            names: template.names,
            grads: arrays,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.grads[i].as_slice())
    }

    fn get_mut(&mut self, name: &str) -> &mut Vec<f64> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no gradient array named {name}"));
        &mut self.grads[i]
    }

    /// Adds `other` into `self` elementwise.
    pub fn accumulate(&mut self, other: &GradientSet) {
        assert_eq!(self.names, other.names, "gradient sets must align");
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    /// Scales every gradient entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Forward tapes
// ---------------------------------------------------------------------------

struct SentenceTape {
    ids: Vec<u32>,
    /// Input to each linear layer (after dropout where applicable).
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden (ReLU) layers.
    pre_activations: Vec<Vec<f64>>,
    /// Dropout masks with inverted scaling baked in; empty in eval mode.
    /// Order: after pooling, then after each hidden activation.
    masks: Vec<Vec<f64>>,
}

/// Batch of encoded sentences with the activation tape needed for backward.
pub struct EncodedBatch {
    pub e: RealMatrix,
    tapes: Vec<SentenceTape>,
    mode: Mode,
}

fn dropout_mask(dim: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    (0..dim)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
        .collect()
}

fn encode_one(
    params: &EncoderParams,
    ids: &[u32],
    seed: u64,
    mode: Mode,
) -> Result<(Vec<f64>, SentenceTape), EncoderError> {
    if ids.is_empty() {
        return Err(EncoderError::EmptySentence);
    }
    let d_tok = params.d_tok();
    let mut pooled = vec![0.0; d_tok];
    for &id in ids {
        let row = params.embedding.row(id as usize);
        for (p, v) in pooled.iter_mut().zip(row) {
            *p += v;
        }
    }
    let inv_len = 1.0 / ids.len() as f64;
    for p in &mut pooled {
        *p *= inv_len;
    }

    let use_dropout = mode == Mode::Train && params.dropout > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::new();

    let mut h = pooled;
    if use_dropout {
        let mask = dropout_mask(h.len(), params.dropout, &mut rng);
        for (v, m) in h.iter_mut().zip(&mask) {
            *v *= m;
        }
        masks.push(mask);
    }

    let n_layers = params.layers.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut buf = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        layer_inputs.push(h.clone());
        layer.forward(&h, &mut buf);
        if l + 1 < n_layers {
            pre_activations.push(buf.clone());
            for v in &mut buf {
                *v = v.max(0.0);
            }
            if use_dropout {
                let mask = dropout_mask(buf.len(), params.dropout, &mut rng);
                for (v, m) in buf.iter_mut().zip(&mask) {
                    *v *= m;
                }
                masks.push(mask);
            }
        }
        std::mem::swap(&mut h, &mut buf);
    }

    Ok((
        h.clone(),
        SentenceTape {
            ids: ids.to_vec(),
            layer_inputs,
            pre_activations,
            masks,
        },
    ))
}

/// Sentence embedding: mean-pooled token embeddings through the MLP, with
/// inverted dropout drawn deterministically from `seed` in train mode.
pub fn encode(
    ids: &[u32],
    params: &EncoderParams,
    seed: u64,
    mode: Mode,
) -> Result<Vec<f64>, EncoderError> {
    encode_one(params, ids, seed, mode).map(|(e, _)| e)
}

/// Encodes a batch, keeping the activation tape for backward.
pub fn encode_batch(
    params: &EncoderParams,
    batch: &[Vec<u32>],
    seeds: &[u64],
    mode: Mode,
) -> Result<EncodedBatch, EncoderError> {
    if batch.len() != seeds.len() {
        return Err(EncoderError::StateMismatch(format!(
            "batch has {} sentences but {} seeds",
            batch.len(),
            seeds.len()
        )));
    }
    if batch.is_empty() {
        return Err(EncoderError::EmptySentence);
    }
    let d_e = params.d_e();
    let mut e = RealMatrix::zeros(batch.len(), d_e);
    let mut tapes = Vec::with_capacity(batch.len());
    for (r, (ids, &seed)) in batch.iter().zip(seeds).enumerate() {
        let (row, tape) = encode_one(params, ids, seed, mode)?;
        e.row_mut(r).copy_from_slice(&row);
        tapes.push(tape);
    }
    Ok(EncodedBatch { e, tapes, mode })
}

struct BnTape {
    /// Normalized features before the affine rescale.
    x_hat: RealMatrix,
    /// sqrt(var + eps) per feature (batch stats in train, running in eval).
    denom: Vec<f64>,
    batch_stats: bool,
}

enum ProjectorTape {
    Simcse {
        input: RealMatrix,
        z: RealMatrix,
    },
    Dimcon {
        input: RealMatrix,
        bn1: BnTape,
        relu1: RealMatrix,
        bn2: BnTape,
        relu2: RealMatrix,
    },
}

/// Projected batch with the tape needed for backward.
pub struct ProjectedBatch {
    pub z: RealMatrix,
    tape: ProjectorTape,
}

fn linear_batch(layer: &Linear, x: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(x.rows(), layer.out_dim());
    let mut buf = Vec::new();
    for r in 0..x.rows() {
        layer.forward(x.row(r), &mut buf);
        out.row_mut(r).copy_from_slice(&buf);
    }
    out
}

fn batchnorm_forward(
    bn: &mut BatchNorm,
    x: &RealMatrix,
    mode: Mode,
) -> Result<(RealMatrix, BnTape), EncoderError> {
    let n = x.rows();
    let d = bn.dim();
    let (mean, denom, batch_stats) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(EncoderError::BatchTooSmall { rows: n });
            }
            let (mean, var) = crate::mathcore::column_moments(x);
            for i in 0..d {
                bn.running_mean[i] =
                    (1.0 - bn.momentum) * bn.running_mean[i] + bn.momentum * mean[i];
                bn.running_var[i] = (1.0 - bn.momentum) * bn.running_var[i] + bn.momentum * var[i];
            }
            let denom: Vec<f64> = var.iter().map(|v| (v + bn.eps).sqrt()).collect();
            (mean, denom, true)
        }
        Mode::Eval => {
            let denom: Vec<f64> = bn.running_var.iter().map(|v| (v + bn.eps).sqrt()).collect();
            (bn.running_mean.clone(), denom, false)
        }
    };
    let mut x_hat = x.clone();
    for r in 0..n {
        let row = x_hat.row_mut(r);
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[i]) / denom[i];
        }
    }
    let mut y = x_hat.clone();
    for r in 0..n {
        let row = y.row_mut(r);
        for (i, v) in row.iter_mut().enumerate() {
            *v = bn.gamma[i] * *v + bn.beta[i];
        }
    }
    Ok((
        y,
        BnTape {
            x_hat,
            denom,
            batch_stats,
        },
    ))
}

fn relu_batch(x: &RealMatrix) -> RealMatrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Projects a batch of sentence embeddings.
///
/// In train mode the dimension-contrastive head normalizes with batch
/// statistics and updates the running statistics; eval mode uses running
/// statistics only.
pub fn project_batch(
    params: &mut ProjectorParams,
    e_batch: &RealMatrix,
    mode: Mode,
) -> Result<ProjectedBatch, EncoderError> {
    if e_batch.cols() != params.in_dim() {
        return Err(EncoderError::DimMismatch {
            expected: params.in_dim(),
            got: e_batch.cols(),
        });
    }
    match params {
        ProjectorParams::SimcseHead { head } => {
            let mut z = linear_batch(head, e_batch);
            for v in z.data_mut() {
                *v = v.tanh();
            }
            Ok(ProjectedBatch {
                z: z.clone(),
                tape: ProjectorTape::Simcse {
                    input: e_batch.clone(),
                    z,
                },
            })
        }
        ProjectorParams::DimconHead {
            lin1,
            bn1,
            lin2,
            bn2,
            lin3,
        } => {
            let a1 = linear_batch(lin1, e_batch);
            let (y1, bn1_tape) = batchnorm_forward(bn1, &a1, mode)?;
            let r1 = relu_batch(&y1);
            let a2 = linear_batch(lin2, &r1);
            let (y2, bn2_tape) = batchnorm_forward(bn2, &a2, mode)?;
            let r2 = relu_batch(&y2);
            let z = linear_batch(lin3, &r2);
            Ok(ProjectedBatch {
                z,
                tape: ProjectorTape::Dimcon {
                    input: e_batch.clone(),
                    bn1: bn1_tape,
                    relu1: r1,
                    bn2: bn2_tape,
                    relu2: r2,
                },
            })
        }
    }
}

/// Convenience wrapper returning only the projected matrix.
pub fn project(
    params: &mut ProjectorParams,
    e_batch: &RealMatrix,
    mode: Mode,
) -> Result<RealMatrix, EncoderError> {
    project_batch(params, e_batch, mode).map(|p| p.z)
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// dL/dx for a linear layer given dL/dy, accumulating weight and bias grads.
fn linear_backward(
    layer: &Linear,
    input: &RealMatrix,
    upstream: &RealMatrix,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> RealMatrix {
    let n = input.rows();
    let in_dim = layer.in_dim();
    let out_dim = layer.out_dim();
    let mut grad_input = RealMatrix::zeros(n, in_dim);
    for r in 0..n {
        let x = input.row(r);
        let g = upstream.row(r);
        for o in 0..out_dim {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            grad_bias[o] += go;
            let wrow = &mut grad_weight[o * in_dim..(o + 1) * in_dim];
            for (w, xi) in wrow.iter_mut().zip(x) {
                *w += go * xi;
            }
            let wpar = layer.weight.row(o);
            let gi = grad_input.row_mut(r);
            for (giv, wv) in gi.iter_mut().zip(wpar) {
                *giv += go * wv;
            }
        }
    }
    grad_input
}

/// dL/dx through batch normalization given dL/dy, accumulating gamma/beta
/// grads. With batch statistics the Jacobian couples all rows of a column.
fn batchnorm_backward(
    bn: &BatchNorm,
    tape: &BnTape,
    upstream: &RealMatrix,
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) -> RealMatrix {
    let n = upstream.rows();
    let d = bn.dim();
    let nf = n as f64;
    let mut g_hat = RealMatrix::zeros(n, d);
    for r in 0..n {
        let up = upstream.row(r);
        let xh = tape.x_hat.row(r);
        let gh = g_hat.row_mut(r);
        for i in 0..d {
            grad_gamma[i] += up[i] * xh[i];
            grad_beta[i] += up[i];
            gh[i] = up[i] * bn.gamma[i];
        }
    }
    if !tape.batch_stats {
        // running statistics are constants: elementwise scale
        let mut out = g_hat;
        for r in 0..n {
            let row = out.row_mut(r);
            for (i, v) in row.iter_mut().enumerate() {
                *v /= tape.denom[i];
            }
        }
        return out;
    }
    let mut mean_g = vec![0.0; d];
    let mut mean_gx = vec![0.0; d];
    for r in 0..n {
        let gh = g_hat.row(r);
        let xh = tape.x_hat.row(r);
        for i in 0..d {
            mean_g[i] += gh[i];
            mean_gx[i] += gh[i] * xh[i];
        }
    }
    for i in 0..d {
        mean_g[i] /= nf;
        mean_gx[i] /= nf;
    }
    let mut out = RealMatrix::zeros(n, d);
    for r in 0..n {
        let gh = g_hat.row(r);
        let xh = tape.x_hat.row(r);
        let o = out.row_mut(r);
        for i in 0..d {
            o[i] = (gh[i] - mean_g[i] - xh[i] * mean_gx[i]) / tape.denom[i];
        }
    }
    out
}

fn projector_backward(
    params: &ModelParams,
    projected: &ProjectedBatch,
    upstream: &RealMatrix,
    grads: &mut GradientSet,
) -> Result<RealMatrix, EncoderError> {
    if !upstream.same_shape(&projected.z) {
        return Err(EncoderError::StateMismatch(format!(
            "upstream gradient is {}x{}, projected batch is {}x{}",
            upstream.rows(),
            upstream.cols(),
            projected.z.rows(),
            projected.z.cols()
        )));
    }
    match (&params.projector, &projected.tape) {
        (ProjectorParams::SimcseHead { head }, ProjectorTape::Simcse { input, z }) => {
            // through tanh: dL/dpre = dL/dz * (1 - z^2)
            let mut g_pre = upstream.clone();
            for r in 0..g_pre.rows() {
                let zr = z.row(r);
                let g = g_pre.row_mut(r);
                for (gv, zv) in g.iter_mut().zip(zr) {
                    *gv *= 1.0 - zv * zv;
                }
            }
            let mut gw = std::mem::take(grads.get_mut("projector.head.weight"));
            let mut gb = std::mem::take(grads.get_mut("projector.head.bias"));
            let g_in = linear_backward(head, input, &g_pre, &mut gw, &mut gb);
            *grads.get_mut("projector.head.weight") = gw;
            *grads.get_mut("projector.head.bias") = gb;
            Ok(g_in)
        }
        (
            ProjectorParams::DimconHead {
                lin1,
                bn1,
                lin2,
                bn2,
                lin3,
            },
            ProjectorTape::Dimcon {
                input,
                bn1: bn1_tape,
                relu1,
                bn2: bn2_tape,
                relu2,
            },
        ) => {
            let take = |grads: &mut GradientSet, name: &str| std::mem::take(grads.get_mut(name));

            let mut gw3 = take(grads, "projector.lin3.weight");
            let mut gb3 = take(grads, "projector.lin3.bias");
            let mut g = linear_backward(lin3, relu2, upstream, &mut gw3, &mut gb3);
            *grads.get_mut("projector.lin3.weight") = gw3;
            *grads.get_mut("projector.lin3.bias") = gb3;

            // ReLU mask from the stored activations (output > 0)
            for r in 0..g.rows() {
                let act = relu2.row(r);
                let row = g.row_mut(r);
                for (gv, av) in row.iter_mut().zip(act) {
                    if *av <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let mut gg2 = take(grads, "projector.bn2.gamma");
            let mut gbe2 = take(grads, "projector.bn2.beta");
            let g = batchnorm_backward(bn2, bn2_tape, &g, &mut gg2, &mut gbe2);
            *grads.get_mut("projector.bn2.gamma") = gg2;
            *grads.get_mut("projector.bn2.beta") = gbe2;

            let mut gw2 = take(grads, "projector.lin2.weight");
            let mut gb2 = take(grads, "projector.lin2.bias");
            let mut g = linear_backward(lin2, relu1, &g, &mut gw2, &mut gb2);
            *grads.get_mut("projector.lin2.weight") = gw2;
            *grads.get_mut("projector.lin2.bias") = gb2;

            for r in 0..g.rows() {
                let act = relu1.row(r);
                let row = g.row_mut(r);
                for (gv, av) in row.iter_mut().zip(act) {
                    if *av <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let mut gg1 = take(grads, "projector.bn1.gamma");
            let mut gbe1 = take(grads, "projector.bn1.beta");
            let g = batchnorm_backward(bn1, bn1_tape, &g, &mut gg1, &mut gbe1);
            *grads.get_mut("projector.bn1.gamma") = gg1;
            *grads.get_mut("projector.bn1.beta") = gbe1;

            let mut gw1 = take(grads, "projector.lin1.weight");
            let mut gb1 = take(grads, "projector.lin1.bias");
            let g_in = linear_backward(lin1, input, &g, &mut gw1, &mut gb1);
            *grads.get_mut("projector.lin1.weight") = gw1;
            *grads.get_mut("projector.lin1.bias") = gb1;
            Ok(g_in)
        }
        _ => Err(EncoderError::StateMismatch(
            "projector tape does not match projector parameters".into(),
        )),
    }
}

fn encoder_backward(
    params: &EncoderParams,
    encoded: &EncodedBatch,
    grad_e: &RealMatrix,
    grads: &mut GradientSet,
) -> Result<(), EncoderError> {
    if grad_e.rows() != encoded.tapes.len() || grad_e.cols() != params.d_e() {
        return Err(EncoderError::StateMismatch(format!(
            "gradient batch is {}x{}, expected {}x{}",
            grad_e.rows(),
            grad_e.cols(),
            encoded.tapes.len(),
            params.d_e()
        )));
    }
    let n_layers = params.layers.len();
    let use_dropout = encoded.mode == Mode::Train && params.dropout > 0.0;

    let mut grad_emb = std::mem::take(grads.get_mut("encoder.embedding"));
    let mut layer_grads: Vec<(Vec<f64>, Vec<f64>)> = (0..n_layers)
        .map(|i| {
            (
                std::mem::take(grads.get_mut(&format!("encoder.layer{i}.weight"))),
                std::mem::take(grads.get_mut(&format!("encoder.layer{i}.bias"))),
            )
        })
        .collect();

    let d_tok = params.d_tok();
    for (s, tape) in encoded.tapes.iter().enumerate() {
        if tape.layer_inputs.len() != n_layers {
            return Err(EncoderError::StateMismatch(format!(
                "tape for sentence {s} has {} layer inputs, expected {n_layers}",
                tape.layer_inputs.len()
            )));
        }
        let mut g: Vec<f64> = grad_e.row(s).to_vec();
        for l in (0..n_layers).rev() {
            let layer = &params.layers[l];
            let input = &tape.layer_inputs[l];
            let (gw, gb) = &mut layer_grads[l];
            let in_dim = layer.in_dim();
            let mut g_in = vec![0.0; in_dim];
            for o in 0..layer.out_dim() {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                let wrow = &mut gw[o * in_dim..(o + 1) * in_dim];
                for (w, xi) in wrow.iter_mut().zip(input) {
                    *w += go * xi;
                }
                let wpar = layer.weight.row(o);
                for (gi, wv) in g_in.iter_mut().zip(wpar) {
                    *gi += go * wv;
                }
            }
            g = g_in;
            if l > 0 {
                // through dropout then ReLU of the previous hidden layer
                if use_dropout {
                    let mask = &tape.masks[l]; // index l = after hidden activation l-1
                    for (gv, m) in g.iter_mut().zip(mask) {
                        *gv *= m;
                    }
                }
                let pre = &tape.pre_activations[l - 1];
                for (gv, p) in g.iter_mut().zip(pre) {
                    if *p <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
        }
        // through pooled dropout, then mean pooling into embedding rows
        if use_dropout {
            let mask = &tape.masks[0];
            for (gv, m) in g.iter_mut().zip(mask) {
                *gv *= m;
            }
        }
        let inv_len = 1.0 / tape.ids.len() as f64;
        for &id in &tape.ids {
            let row = &mut grad_emb[id as usize * d_tok..(id as usize + 1) * d_tok];
            for (rv, gv) in row.iter_mut().zip(&g) {
                *rv += gv * inv_len;
            }
        }
    }

    *grads.get_mut("encoder.embedding") = grad_emb;
    for (i, (gw, gb)) in layer_grads.into_iter().enumerate() {
        *grads.get_mut(&format!("encoder.layer{i}.weight")) = gw;
        *grads.get_mut(&format!("encoder.layer{i}.bias")) = gb;
    }
    Ok(())
}

/// Smallest |pre-activation| at any ReLU of the encoder or the
/// dimension-contrastive projector over one forward pass.
///
/// Finite-difference checks are only well-posed when parameter
/// perturbations stay on one side of every kink, so they require this
/// margin to dominate the perturbation step.
pub fn relu_kink_margin(
    params: &ModelParams,
    batch: &[Vec<u32>],
    seeds: &[u64],
    mode: Mode,
) -> Result<f64, EncoderError> {
    let mut margin = f64::INFINITY;
    let encoded = encode_batch(&params.encoder, batch, seeds, mode)?;
    for tape in &encoded.tapes {
        for pre in &tape.pre_activations {
            for v in pre {
                margin = margin.min(v.abs());
            }
        }
    }
    let mut projector = params.projector.clone();
    let projected = project_batch(&mut projector, &encoded.e, mode)?;
    if let ProjectorTape::Dimcon { bn1, bn2, .. } = &projected.tape {
        let bn_params = match &params.projector {
            ProjectorParams::DimconHead { bn1, bn2, .. } => [bn1, bn2],
            ProjectorParams::SimcseHead { .. } => unreachable!("dimcon tape"),
        };
        for (tape, bn) in [bn1, bn2].into_iter().zip(bn_params) {
            for r in 0..tape.x_hat.rows() {
                let row = tape.x_hat.row(r);
                for (i, &xh) in row.iter().enumerate() {
                    let y = bn.gamma[i] * xh + bn.beta[i];
                    margin = margin.min(y.abs());
                }
            }
        }
    }
    Ok(margin)
}

/// Reverse-mode gradients of the scalar loss with respect to every
/// parameter array, given dL/dZ from a loss function.
pub fn backward(
    params: &ModelParams,
    encoded: &EncodedBatch,
    projected: &ProjectedBatch,
    upstream: &RealMatrix,
) -> Result<GradientSet, EncoderError> {
    let mut grads = GradientSet::zeros_like(params);
    let grad_e = projector_backward(params, projected, upstream, &mut grads)?;
    encoder_backward(&params.encoder, encoded, &grad_e, &mut grads)?;
    Ok(grads)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

const KIND_SIMCSE: f64 = 0.0;
const KIND_DIMCON: f64 = 1.0;

fn persistent_entries(params: &ModelParams) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    let kind = match &params.projector {
        ProjectorParams::SimcseHead { .. } => KIND_SIMCSE,
        ProjectorParams::DimconHead { .. } => KIND_DIMCON,
    };
    out.push(("meta.projector_kind".into(), vec![1], vec![kind]));
    out.push(("meta.dropout".into(), vec![1], vec![params.encoder.dropout]));
    if let ProjectorParams::DimconHead { bn1, .. } = &params.projector {
        out.push(("meta.bn_momentum".into(), vec![1], vec![bn1.momentum]));
        out.push(("meta.bn_eps".into(), vec![1], vec![bn1.eps]));
    }
    let emb = &params.encoder.embedding;
    out.push((
        "encoder.embedding".into(),
        vec![emb.rows(), emb.cols()],
        emb.data().to_vec(),
    ));
    for (i, l) in params.encoder.layers.iter().enumerate() {
        out.push((
            format!("encoder.layer{i}.weight"),
            vec![l.out_dim(), l.in_dim()],
            l.weight.data().to_vec(),
        ));
        out.push((
            format!("encoder.layer{i}.bias"),
            vec![l.out_dim()],
            l.bias.clone(),
        ));
    }
    match &params.projector {
        ProjectorParams::SimcseHead { head } => {
            out.push((
                "projector.head.weight".into(),
                vec![head.out_dim(), head.in_dim()],
                head.weight.data().to_vec(),
            ));
            out.push((
                "projector.head.bias".into(),
                vec![head.out_dim()],
                head.bias.clone(),
            ));
        }
        ProjectorParams::DimconHead {
            lin1,
            bn1,
            lin2,
            bn2,
            lin3,
        } => {
            for (name, l) in [
                ("projector.lin1", lin1),
                ("projector.lin2", lin2),
                ("projector.lin3", lin3),
            ] {
                out.push((
                    format!("{name}.weight"),
                    vec![l.out_dim(), l.in_dim()],
                    l.weight.data().to_vec(),
                ));
                out.push((format!("{name}.bias"), vec![l.out_dim()], l.bias.clone()));
            }
            for (name, bn) in [("projector.bn1", bn1), ("projector.bn2", bn2)] {
                out.push((format!("{name}.gamma"), vec![bn.dim()], bn.gamma.clone()));
                out.push((format!("{name}.beta"), vec![bn.dim()], bn.beta.clone()));
                out.push((
                    format!("{name}.running_mean"),
                    vec![bn.dim()],
                    bn.running_mean.clone(),
                ));
                out.push((
                    format!("{name}.running_var"),
                    vec![bn.dim()],
                    bn.running_var.clone(),
                ));
            }
        }
    }
    out
}

/// Writes the checkpoint: magic, manifest (names + shapes), then raw arrays
/// as little-endian f64 in manifest order.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    let entries = persistent_entries(params);
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, _) in &entries {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, _, data) in &entries {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut rd = Reader { buf, pos: 0 };
    if rd.take(MAGIC.len())? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let n_entries = rd.u32()? as usize;
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name_len = rd.u32()? as usize;
        let name = String::from_utf8(rd.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("manifest name is not UTF-8".into()))?;
        let ndim = rd.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(rd.u64()? as usize);
        }
        manifest.push((name, shape));
    }
    let mut arrays: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for (name, shape) in manifest {
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(rd.take(8)?.try_into().unwrap()));
        }
        arrays.insert(name, (shape, data));
    }
    if rd.pos != rd.buf.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }

    fn take(
        arrays: &mut HashMap<String, (Vec<usize>, Vec<f64>)>,
        name: &str,
    ) -> Result<(Vec<usize>, Vec<f64>), CheckpointError> {
        arrays
            .remove(name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing array {name}")))
    }

    let kind = take(&mut arrays, "meta.projector_kind")?.1[0];
    let dropout = take(&mut arrays, "meta.dropout")?.1[0];

    let (emb_shape, emb_data) = take(&mut arrays, "encoder.embedding")?;
    if emb_shape.len() != 2 {
        return Err(CheckpointError::Corrupt("embedding must be 2-d".into()));
    }
    let embedding = RealMatrix::from_vec(emb_shape[0], emb_shape[1], emb_data)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let mut layers = Vec::new();
    let mut i = 0;
    loop {
        let wname = format!("encoder.layer{i}.weight");
        if !arrays.contains_key(&wname) {
            break;
        }
        let (wshape, wdata) = take(&mut arrays, &wname)?;
        let (_, bdata) = take(&mut arrays, &format!("encoder.layer{i}.bias"))?;
        if wshape.len() != 2 {
            return Err(CheckpointError::Corrupt(format!("{wname} must be 2-d")));
        }
        let weight = RealMatrix::from_vec(wshape[0], wshape[1], wdata)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        layers.push(Linear {
            weight,
            bias: bdata,
        });
        i += 1;
    }
    if layers.is_empty() {
        return Err(CheckpointError::Corrupt("no encoder layers".into()));
    }

    let projector = if kind == KIND_SIMCSE {
        let (wshape, wdata) = take(&mut arrays, "projector.head.weight")?;
        let (_, bdata) = take(&mut arrays, "projector.head.bias")?;
        let weight = RealMatrix::from_vec(wshape[0], wshape[1], wdata)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        ProjectorParams::SimcseHead {
            head: Linear {
                weight,
                bias: bdata,
            },
        }
    } else if kind == KIND_DIMCON {
        let momentum = take(&mut arrays, "meta.bn_momentum")?.1[0];
        let eps = take(&mut arrays, "meta.bn_eps")?.1[0];
        let mut lin = |name: &str| -> Result<Linear, CheckpointError> {
            let (wshape, wdata) = arrays
                .remove(&format!("{name}.weight"))
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing {name}.weight")))?;
            let (_, bdata) = arrays
                .remove(&format!("{name}.bias"))
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing {name}.bias")))?;
            let weight = RealMatrix::from_vec(wshape[0], wshape[1], wdata)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            Ok(Linear {
                weight,
                bias: bdata,
            })
        };
        let lin1 = lin("projector.lin1")?;
        let lin2 = lin("projector.lin2")?;
        let lin3 = lin("projector.lin3")?;
        let mut bn_arr = |name: String| -> Result<Vec<f64>, CheckpointError> {
            Ok(arrays
                .remove(&name)
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing {name}")))?
                .1)
        };
        let mut bn = |name: &str| -> Result<BatchNorm, CheckpointError> {
            Ok(BatchNorm {
                gamma: bn_arr(format!("{name}.gamma"))?,
                beta: bn_arr(format!("{name}.beta"))?,
                running_mean: bn_arr(format!("{name}.running_mean"))?,
                running_var: bn_arr(format!("{name}.running_var"))?,
                momentum,
                eps,
            })
        };
        let bn1 = bn("projector.bn1")?;
        let bn2 = bn("projector.bn2")?;
        ProjectorParams::DimconHead {
            lin1,
            bn1,
            lin2,
            bn2,
            lin3,
        }
    } else {
        return Err(CheckpointError::Corrupt(format!(
            "unknown projector kind {kind}"
        )));
    };

    if !arrays.is_empty() {
        let mut names: Vec<&String> = arrays.keys().collect();
        names.sort();
        return Err(CheckpointError::Corrupt(format!(
            "unexpected arrays: {names:?}"
        )));
    }

    Ok(ModelParams {
        encoder: EncoderParams {
            embedding,
            layers,
            dropout,
        },
        projector,
    })
}

/// A trained model: vocabulary plus parameters, loadable from a checkpoint
/// with its vocabulary file alongside.
#[derive(Debug, Clone)]
pub struct Model {
    pub vocab: Vocab,
    pub params: ModelParams,
}

impl Model {
    /// Saves the checkpoint at `checkpoint_path` and the vocabulary as
    /// token-per-line text in the same directory.
    pub fn save(&self, checkpoint_path: &Path) -> Result<(), CheckpointError> {
        save_checkpoint(&self.params, checkpoint_path)?;
        self.vocab.save(&Self::vocab_path(checkpoint_path))?;
        Ok(())
    }

    pub fn load(checkpoint_path: &Path) -> Result<Self, CheckpointError> {
        let params = load_checkpoint(checkpoint_path)?;
        let vocab = Vocab::load(&Self::vocab_path(checkpoint_path))?;
        Ok(Self { vocab, params })
    }

    fn vocab_path(checkpoint_path: &Path) -> PathBuf {
        checkpoint_path.with_file_name(VOCAB_FILE)
    }

    /// Eval-mode, pre-projector sentence embedding.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let ids = tokenize(text, &self.vocab)?;
        encode(&ids, &self.params.encoder, 0, Mode::Eval)
    }
}
