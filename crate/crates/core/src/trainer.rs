//! Optimization loop: batching, Adam updates, periodic dev-set evaluation,
//! best-checkpoint selection by Spearman correlation, and the
//! hyperparameter-sweep sampler.
//!
//! A run is fully determined by (data, config, master seed): epoch shuffles,
//! per-sentence augmentation draws, and encoder dropout masks all derive
//! from the master seed, so identical runs reproduce loss trajectories and
//! history files byte for byte.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::{make_views, AugmentError, AugmentStrategy, Thesaurus, ViewSource};
use crate::datakit::ScoredPair;
use crate::encoder::{
    backward, encode, encode_batch, lookup_tokens, project_batch, tokenize, EncoderDims,
    EncoderError, EncoderParams, GradientSet, Mode, Model, ModelParams, ProjectorParams, Vocab,
};
use crate::losses::{
    barlow_twins_loss, simcse_loss, vicreg_loss, BarlowConfig, LossError, SimCseConfig,
    VicRegConfig,
};
use crate::mathcore::{cosine_similarity, spearman, MathError, RealMatrix};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {term} at step {step}")]
    NonFinite { step: u64, term: String },
    #[error("empty sweep space: {0}")]
    EmptySpace(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Deterministic seed mixing (splitmix64 finalizer chain). Distinct inputs
/// give distinct outputs for a fixed prefix, since each stage is a bijection.
pub(crate) fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut acc = splitmix64(master);
    for &p in parts {
        acc = splitmix64(acc.wrapping_add(p).wrapping_add(1));
    }
    acc
}

/// Training objective with its loss configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Simcse(SimCseConfig),
    Barlow(BarlowConfig),
    VicReg(VicRegConfig),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Simcse(_) => "simcse",
            Objective::Barlow(_) => "barlow",
            Objective::VicReg(_) => "vicreg",
        }
    }

    /// Dimension-contrastive objectives need batch statistics, so they pair
    /// with the widening projector head and need at least two rows.
    pub fn needs_batch_stats(&self) -> bool {
        !matches!(self, Objective::Simcse(_))
    }
}

/// Textual augmentation family; parameters live in [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Dropout,
    Shuffle,
    Eda,
    Supervised,
}

impl AugmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::Dropout => "dropout",
            AugmentKind::Shuffle => "shuffle",
            AugmentKind::Eda => "eda",
            AugmentKind::Supervised => "supervised",
        }
    }
}

/// One training run's full configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub augment: AugmentKind,
    /// Encoder dropout probability; also the dropout-augmentation parameter.
    pub p_do: f64,
    pub p_s: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub dims: EncoderDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Simcse(SimCseConfig::default()),
            augment: AugmentKind::Dropout,
            p_do: 0.1,
            p_s: 0.3,
            alpha: 0.1,
            learning_rate: 3e-5,
            batch_size: 256,
            epochs: 2,
            eval_every: 60,
            seed: 0,
            dims: EncoderDims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate <= 0.0 {
            return Err(TrainError::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.eval_every < 1 {
            return Err(TrainError::Config("eval_every must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.objective.needs_batch_stats() && self.batch_size < 2 {
            return Err(TrainError::Config(format!(
                "{} requires batch_size >= 2",
                self.objective.name()
            )));
        }
        if !(0.0..1.0).contains(&self.p_do) {
            return Err(TrainError::Config(format!("p_do out of [0,1): {}", self.p_do)));
        }
        if !(0.0..=1.0).contains(&self.p_s) {
            return Err(TrainError::Config(format!("p_s out of [0,1]: {}", self.p_s)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainError::Config(format!("alpha out of [0,1]: {}", self.alpha)));
        }
        match self.objective {
            Objective::Simcse(c) => {
                if c.temperature <= 0.0 {
                    return Err(TrainError::Config("temperature must be > 0".into()));
                }
            }
            Objective::Barlow(c) => {
                if c.lambda_bt < 0.0 {
                    return Err(TrainError::Config("lambda_bt must be >= 0".into()));
                }
            }
            Objective::VicReg(c) => {
                if c.lambda_i < 0.0 || c.lambda_v < 0.0 || c.lambda_c < 0.0 {
                    return Err(TrainError::Config("vicreg coefficients must be >= 0".into()));
                }
                if c.eps <= 0.0 {
                    return Err(TrainError::Config("vicreg eps must be > 0".into()));
                }
            }
        }
        if self.dims.d_tok < 1 || self.dims.d_e < 1 || self.dims.proj_dim < 1 {
            return Err(TrainError::Config("encoder dims must be >= 1".into()));
        }
        Ok(())
    }

    pub fn strategy(&self) -> AugmentStrategy {
        match self.augment {
            AugmentKind::Dropout => AugmentStrategy::Dropout { p_do: self.p_do },
            AugmentKind::Shuffle => AugmentStrategy::Shuffle { p_s: self.p_s },
            AugmentKind::Eda => AugmentStrategy::Eda { alpha: self.alpha },
            AugmentKind::Supervised => AugmentStrategy::Supervised,
        }
    }
}

/// One dev evaluation: step, latest training loss (absent before the first
/// step), dev Spearman.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub step: u64,
    pub train_loss: Option<f64>,
    pub dev_spearman: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub entries: Vec<HistoryEntry>,
    pub best_step: u64,
    pub best_dev_spearman: f64,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_loss,dev_spearman\n");
        for e in &self.entries {
            let loss = e.train_loss.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.step, loss, e.dev_spearman));
        }
        out
    }
}

/// Unsupervised corpus or supervised positive pairs.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Corpus(&'a [String]),
    Pairs(&'a [(String, String)]),
}

impl TrainData<'_> {
    fn len(&self) -> usize {
        match self {
            TrainData::Corpus(c) => c.len(),
            TrainData::Pairs(p) => p.len(),
        }
    }

    fn source(&self, idx: usize) -> ViewSource<'_> {
        match self {
            TrainData::Corpus(c) => ViewSource::Sentence(&c[idx]),
            TrainData::Pairs(p) => ViewSource::Pair(&p[idx].0, &p[idx].1),
        }
    }

    fn texts(&self) -> Vec<&str> {
        match self {
            TrainData::Corpus(c) => c.iter().map(String::as_str).collect(),
            TrainData::Pairs(p) => p
                .iter()
                .flat_map(|(a, b)| [a.as_str(), b.as_str()])
                .collect(),
        }
    }
}

/// The trained artifact: best checkpoint plus bookkeeping, and the
/// initial/final parameters for before/after comparisons.
pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub init_params: ModelParams,
    pub final_params: ModelParams,
}

/// Adam with bias correction over the model's trainable arrays.
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.trainable().iter().map(|(_, d)| d.len()).collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update: m and v are exponential moving averages of the gradient
/// and its square, with bias correction by step count.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps_opt: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let mut arrays = params.trainable_mut();
    for (k, (_, arr)) in arrays.iter_mut().enumerate() {
        let g = &grads.arrays()[k];
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            arr[i] -= lr * m_hat / (v_hat.sqrt() + eps_opt);
        }
    }
}

/// Seeded Fisher-Yates permutation of 0..n for one epoch.
pub(crate) fn epoch_permutation(n: usize, master_seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(master_seed, &[1, epoch as u64]));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn dev_spearman(
    encoder: &EncoderParams,
    vocab: &Vocab,
    dev: &[ScoredPair],
) -> Result<f64, TrainError> {
    let mut sims = Vec::with_capacity(dev.len());
    let mut scores = Vec::with_capacity(dev.len());
    for p in dev {
        let ea = encode(&tokenize(&p.sentence_a, vocab)?, encoder, 0, Mode::Eval)?;
        let eb = encode(&tokenize(&p.sentence_b, vocab)?, encoder, 0, Mode::Eval)?;
        sims.push(cosine_similarity(&ea, &eb)?);
        scores.push(p.score);
    }
    Ok(spearman(&sims, &scores)?)
}

fn compute_loss(
    objective: &Objective,
    za: &RealMatrix,
    zb: &RealMatrix,
) -> Result<crate::losses::LossResult, LossError> {
    match objective {
        Objective::Simcse(cfg) => simcse_loss(za, zb, cfg),
        Objective::Barlow(cfg) => barlow_twins_loss(za, zb, cfg),
        Objective::VicReg(cfg) => vicreg_loss(za, zb, cfg),
    }
}

/// Runs the full protocol: per-epoch seeded shuffling, two views per
/// sentence, the configured loss normalized by batch size, Adam updates,
/// dev evaluation at step 0, every `eval_every` steps, and at the final
/// step, returning the snapshot with the best dev Spearman.
pub fn train(
    cfg: &TrainConfig,
    data: TrainData<'_>,
    dev: &[ScoredPair],
    thesaurus: &Thesaurus,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.len() == 0 {
        return Err(TrainError::Config("training data is empty".into()));
    }
    if dev.is_empty() {
        return Err(TrainError::Config("dev set is empty".into()));
    }
    if cfg.augment == AugmentKind::Supervised && !matches!(data, TrainData::Pairs(_)) {
        return Err(TrainError::Config(
            "supervised augmentation requires positive pairs".into(),
        ));
    }

    // vocabulary from the training text
    let mut all_tokens: Vec<String> = Vec::new();
    for text in data.texts() {
        if let Ok(tokens) = crate::encoder::split_text(text) {
            all_tokens.extend(tokens);
        }
    }
    let vocab = Vocab::build(all_tokens.iter().map(String::as_str));

    // parameter init
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0]));
    let encoder = EncoderParams::init(vocab.len(), &cfg.dims, cfg.p_do, &mut init_rng);
    let projector = match cfg.objective {
        Objective::Simcse(_) => ProjectorParams::init_simcse(cfg.dims.d_e, &mut init_rng),
        _ => ProjectorParams::init_dimcon(cfg.dims.d_e, cfg.dims.proj_dim, &mut init_rng),
    };
    let mut params = ModelParams { encoder, projector };
    let init_params = params.clone();
    let mut adam = AdamState::new(&params);
    let strategy = cfg.strategy();
    let min_batch = if cfg.objective.needs_batch_stats() { 2 } else { 1 };

    let mut history = TrainHistory::default();
    let mut best_params = params.clone();
    let mut step: u64 = 0;
    let mut last_loss: Option<f64> = None;

    let record_eval = |step: u64,
                           last_loss: Option<f64>,
                           params: &ModelParams,
                           history: &mut TrainHistory,
                           best_params: &mut ModelParams|
     -> Result<(), TrainError> {
        let rho = dev_spearman(&params.encoder, &vocab, dev)?;
        history.entries.push(HistoryEntry {
            step,
            train_loss: last_loss,
            dev_spearman: rho,
        });
        if history.entries.len() == 1 || rho > history.best_dev_spearman {
            history.best_dev_spearman = rho;
            history.best_step = step;
            *best_params = params.clone();
        }
        Ok(())
    };

    record_eval(0, None, &params, &mut history, &mut best_params)?;
    let mut last_eval_step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let order = epoch_permutation(data.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            // build both views for every sentence of the batch
            let mut tokens_a: Vec<Vec<u32>> = Vec::with_capacity(chunk.len());
            let mut tokens_b: Vec<Vec<u32>> = Vec::with_capacity(chunk.len());
            let mut seeds_a: Vec<u64> = Vec::with_capacity(chunk.len());
            let mut seeds_b: Vec<u64> = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[2, epoch as u64, idx as u64]));
                let (va, vb) = make_views(data.source(idx), &strategy, thesaurus, &mut rng)?;
                tokens_a.push(lookup_tokens(&va.tokens, &vocab)?);
                tokens_b.push(lookup_tokens(&vb.tokens, &vocab)?);
                seeds_a.push(va.encoder_seed);
                seeds_b.push(vb.encoder_seed);
            }

            let enc_a = encode_batch(&params.encoder, &tokens_a, &seeds_a, Mode::Train)?;
            let enc_b = encode_batch(&params.encoder, &tokens_b, &seeds_b, Mode::Train)?;
            let proj_a = project_batch(&mut params.projector, &enc_a.e, Mode::Train)?;
            let proj_b = project_batch(&mut params.projector, &enc_b.e, Mode::Train)?;

            let loss = compute_loss(&cfg.objective, &proj_a.z, &proj_b.z)?;
            if !loss.value.is_finite() {
                return Err(TrainError::NonFinite {
                    step: step + 1,
                    term: format!("{} loss value", cfg.objective.name()),
                });
            }
            // normalize the summed loss by batch size before the update
            let n = chunk.len() as f64;
            let mut upstream_a = loss.grad_a.clone();
            let mut upstream_b = loss.grad_b.clone();
            for v in upstream_a.data_mut() {
                *v /= n;
            }
            for v in upstream_b.data_mut() {
                *v /= n;
            }
            let mut grads = backward(&params, &enc_a, &proj_a, &upstream_a)?;
            let grads_b = backward(&params, &enc_b, &proj_b, &upstream_b)?;
            grads.accumulate(&grads_b);
            if !grads.all_finite() {
                return Err(TrainError::NonFinite {
                    step: step + 1,
                    term: format!("{} gradients", cfg.objective.name()),
                });
            }

            adam_step(
                &mut params,
                &grads,
                &mut adam,
                cfg.learning_rate,
                ADAM_BETA1,
                ADAM_BETA2,
                ADAM_EPS,
            );
            step += 1;
            last_loss = Some(loss.value / n);

            if step % cfg.eval_every as u64 == 0 {
                record_eval(step, last_loss, &params, &mut history, &mut best_params)?;
                last_eval_step = step;
            }
        }
    }

    // final evaluation if the last step was not on an eval boundary
    if last_eval_step != step {
        record_eval(step, last_loss, &params, &mut history, &mut best_params)?;
    }

    Ok(TrainOutcome {
        model: Model {
            vocab,
            params: best_params,
        },
        history,
        init_params,
        final_params: params,
    })
}

// ---------------------------------------------------------------------------
// Hyperparameter sweeps
// ---------------------------------------------------------------------------

/// Scan domains: discrete grids plus log-uniform ranges for the
/// variance/covariance coefficients.
#[derive(Debug, Clone)]
pub struct SweepSpace {
    /// Non-swept fields, including the objective (whose fixed coefficients
    /// are taken from here) and the augmentation kind.
    pub base: TrainConfig,
    pub learning_rates: Vec<f64>,
    /// Grid over the augmentation parameter (p_do, p_s, or alpha); use a
    /// single value to fix the augmentation.
    pub augment_grid: Vec<f64>,
    pub lambda_bt_grid: Vec<f64>,
    pub log10_lambda_c: (f64, f64),
    pub log10_lambda_v: (f64, f64),
}

impl SweepSpace {
    /// Scan domains used throughout: learning rates {1, 2, 5}e-5,
    /// dropout {0.05, 0.1, 0.2}, shuffle {0.05, 0.1, 0.2, 0.3, 0.5},
    /// EDA alpha {0.1, 0.2}, lambda_bt {0.5, 1, 2.5, 5, 7.5, 10, 25}e-3,
    /// log10 lambda_c in [-3, -1], log10 lambda_v in [1, 4].
    pub fn with_base(base: TrainConfig) -> Self {
        let augment_grid = match base.augment {
            AugmentKind::Dropout => vec![0.05, 0.1, 0.2],
            AugmentKind::Shuffle => vec![0.05, 0.1, 0.2, 0.3, 0.5],
            AugmentKind::Eda => vec![0.1, 0.2],
            AugmentKind::Supervised => vec![0.0],
        };
        Self {
            base,
            learning_rates: vec![1e-5, 2e-5, 5e-5],
            augment_grid,
            lambda_bt_grid: vec![0.5e-3, 1e-3, 2.5e-3, 5e-3, 7.5e-3, 10e-3, 25e-3],
            log10_lambda_c: (-3.0, -1.0),
            log10_lambda_v: (1.0, 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStrategy {
    Grid,
    Random { budget: usize },
}

/// One point in the scan space, with a deterministically derived seed.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub id: usize,
    pub config: TrainConfig,
}

pub(crate) fn trial_seed(master_seed: u64, index: usize) -> u64 {
    mix_seed(master_seed, &[5, index as u64])
}

fn apply_augment_value(cfg: &mut TrainConfig, value: f64) {
    match cfg.augment {
        AugmentKind::Dropout => cfg.p_do = value,
        AugmentKind::Shuffle => cfg.p_s = value,
        AugmentKind::Eda => cfg.alpha = value,
        AugmentKind::Supervised => {}
    }
}

/// Grid strategy: Cartesian product of the applicable grids. Random
/// strategy: `budget` draws, uniform over discrete domains and uniform in
/// log space for the variance/covariance coefficients; trial i's seed is
/// derived from (master_seed, i).
pub fn enumerate_trials(
    space: &SweepSpace,
    strategy: &SweepStrategy,
    master_seed: u64,
) -> Result<Vec<TrialConfig>, TrainError> {
    if space.learning_rates.is_empty() {
        return Err(TrainError::EmptySpace("no learning rates".into()));
    }
    if space.augment_grid.is_empty() {
        return Err(TrainError::EmptySpace("no augmentation values".into()));
    }
    let mut trials = Vec::new();
    match strategy {
        SweepStrategy::Grid => match space.base.objective {
            Objective::Simcse(_) => {
                for &lr in &space.learning_rates {
                    for &aug in &space.augment_grid {
                        let mut cfg = space.base.clone();
                        cfg.learning_rate = lr;
                        apply_augment_value(&mut cfg, aug);
                        trials.push(cfg);
                    }
                }
            }
            Objective::Barlow(base_cfg) => {
                if space.lambda_bt_grid.is_empty() {
                    return Err(TrainError::EmptySpace("no lambda_bt values".into()));
                }
                let _ = base_cfg;
                for &lr in &space.learning_rates {
                    for &aug in &space.augment_grid {
                        for &lambda in &space.lambda_bt_grid {
                            let mut cfg = space.base.clone();
                            cfg.learning_rate = lr;
                            apply_augment_value(&mut cfg, aug);
                            cfg.objective = Objective::Barlow(BarlowConfig { lambda_bt: lambda });
                            trials.push(cfg);
                        }
                    }
                }
            }
            Objective::VicReg(_) => {
                return Err(TrainError::Config(
                    "vicreg coefficients scan over continuous log ranges; use the random strategy"
                        .into(),
                ));
            }
        },
        SweepStrategy::Random { budget } => {
            if *budget == 0 {
                return Err(TrainError::EmptySpace("budget must be >= 1".into()));
            }
            if matches!(space.base.objective, Objective::Barlow(_))
                && space.lambda_bt_grid.is_empty()
            {
                return Err(TrainError::EmptySpace("no lambda_bt values".into()));
            }
            let (c_lo, c_hi) = space.log10_lambda_c;
            let (v_lo, v_hi) = space.log10_lambda_v;
            if matches!(space.base.objective, Objective::VicReg(_)) && (c_lo >= c_hi || v_lo >= v_hi)
            {
                return Err(TrainError::EmptySpace(
                    "log ranges must have lo < hi".into(),
                ));
            }
            for i in 0..*budget {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(master_seed, &[6, i as u64]));
                let mut cfg = space.base.clone();
                cfg.learning_rate =
                    space.learning_rates[rng.gen_range(0..space.learning_rates.len())];
                let aug = space.augment_grid[rng.gen_range(0..space.augment_grid.len())];
                apply_augment_value(&mut cfg, aug);
                match cfg.objective {
                    Objective::Simcse(_) => {}
                    Objective::Barlow(_) => {
                        let lambda =
                            space.lambda_bt_grid[rng.gen_range(0..space.lambda_bt_grid.len())];
                        cfg.objective = Objective::Barlow(BarlowConfig { lambda_bt: lambda });
                    }
                    Objective::VicReg(base) => {
                        let lambda_c = 10f64.powf(rng.gen_range(c_lo..c_hi));
                        let lambda_v = 10f64.powf(rng.gen_range(v_lo..v_hi));
                        cfg.objective = Objective::VicReg(VicRegConfig {
                            lambda_c,
                            lambda_v,
                            ..base
                        });
                    }
                }
                trials.push(cfg);
            }
        }
    }
    Ok(trials
        .into_iter()
        .enumerate()
        .map(|(id, mut config)| {
            config.seed = trial_seed(master_seed, id);
            TrialConfig { id, config }
        })
        .collect())
}
