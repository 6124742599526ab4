//! Command-line surface: train, eval, sweep, report, synth.
//!
//! Run configuration files are flat `key = value` text; unknown keys are
//! rejected so a typo cannot silently fall back to a default. Every command
//! writes its fully-resolved configuration next to its outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::augment::Thesaurus;
use crate::datakit::{
    load_corpus, load_positive_pairs, load_scored_pairs, synth_generate, write_corpus,
    write_positive_pairs, write_scored_pairs, SynthSpec,
};
use crate::encoder::{EncoderDims, Model};
use crate::losses::{BarlowConfig, SimCseConfig, VicRegConfig};
use crate::metrics::{alignment, similarity_histogram, sts_eval, uniformity};
use crate::trainer::{
    enumerate_trials, train, AugmentKind, Objective, SweepSpace, SweepStrategy, TrainConfig,
    TrainData, TrialConfig,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error in {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] crate::datakit::DataError),
    #[error(transparent)]
    Train(#[from] crate::trainer::TrainError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] crate::encoder::CheckpointError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error("trial file {path}: {reason}")]
    Trials { path: PathBuf, reason: String },
    #[error("no trials carry the group key {0:?}")]
    EmptyGroup(String),
}

#[derive(Parser)]
#[command(name = "dimcon", version, about = "Sentence-embedding training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and select the checkpoint with the best dev Spearman.
    Train {
        /// Run configuration file (key = value).
        #[arg(long)]
        config: PathBuf,
        /// Line-per-sentence corpus; a positive-pair TSV for supervised runs.
        #[arg(long)]
        corpus: PathBuf,
        /// Dev set TSV: sentence_a<TAB>sentence_b<TAB>score.
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on scored pairs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Comma-separated subset of sts,align,unif,hist.
        #[arg(long)]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate and run a hyperparameter scan.
    Sweep {
        /// Sweep space file: base run configuration plus scan domains and
        /// corpus/dev paths.
        #[arg(long)]
        space: PathBuf,
        /// grid or random.
        #[arg(long)]
        strategy: String,
        /// Number of random trials (random strategy only).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Trials run concurrently up to this many worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate a synthetic corpus with planted similarity structure.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate trial results per group: max, q75, q50 of best dev Spearman.
    Report {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long = "group-by")]
        group_by: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses argv (without the program name) and runs the command.
/// Returns the process exit status; errors print a one-line diagnostic.
pub fn dispatch<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let mut full = vec!["dimcon".to_string()];
    full.extend(argv);
    let cli = match Cli::try_parse_from(full) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage/diagnostic text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train {
            config,
            corpus,
            dev,
            out,
        } => cmd_train(&config, &corpus, &dev, &out),
        Command::Eval {
            checkpoint,
            pairs,
            metrics,
            out,
        } => cmd_eval(&checkpoint, &pairs, &metrics, &out),
        Command::Sweep {
            space,
            strategy,
            budget,
            seed,
            out,
            jobs,
        } => cmd_sweep(&space, &strategy, budget, seed, &out, jobs),
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Report {
            trials,
            group_by,
            out,
        } => cmd_report(&trials, &group_by, &out),
    }
}

// ---------------------------------------------------------------------------
// key = value files
// ---------------------------------------------------------------------------

struct KvReader {
    path: PathBuf,
    map: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl KvReader {
    fn parse(path: &Path, text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
                path: path.to_path_buf(),
                reason: format!("line {}: expected key = value", i + 1),
            })?;
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    reason: format!("line {}: duplicate key {key}", i + 1),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            map,
            consumed: BTreeSet::new(),
        })
    }

    fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(path, &text)
    }

    fn err(&self, reason: String) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            reason,
        }
    }

    fn get(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn required(&mut self, key: &str) -> Result<String, CliError> {
        self.get(key)
            .ok_or_else(|| self.err(format!("missing required key {key}")))
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<T, CliError> {
        raw.parse()
            .map_err(|_| self.err(format!("cannot parse {key} = {raw:?}")))
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            Some(raw) => self.parse_value(key, &raw),
            None => Ok(default),
        }
    }

    fn opt_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => {
                let vals: Result<Vec<f64>, CliError> = raw
                    .split(',')
                    .map(|s| self.parse_value(key, s.trim()))
                    .collect();
                Ok(Some(vals?))
            }
        }
    }

    /// Errors out if any key was never consumed.
    fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&String> = self
            .map
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config {
                path: self.path,
                reason: format!("unknown keys: {unknown:?}"),
            })
        }
    }
}

fn parse_objective(reader: &mut KvReader) -> Result<Objective, CliError> {
    let name = reader.required("objective")?;
    let objective = match name.as_str() {
        "simcse" => {
            let temperature = reader.opt("temperature", 0.05)?;
            Objective::Simcse(SimCseConfig { temperature })
        }
        "barlow" => {
            let lambda_bt = reader.opt("lambda_bt", 5e-3)?;
            Objective::Barlow(BarlowConfig { lambda_bt })
        }
        "vicreg" => {
            let lambda_i = reader.opt("lambda_i", 1.0)?;
            let lambda_v = reader.opt("lambda_v", 25.0)?;
            let lambda_c = reader.opt("lambda_c", 0.04)?;
            let eps = reader.opt("vicreg_eps", 1e-4)?;
            Objective::VicReg(VicRegConfig {
                lambda_i,
                lambda_v,
                lambda_c,
                eps,
            })
        }
        other => return Err(reader.err(format!("unknown objective {other:?}"))),
    };
    // coefficients of the other objectives are rejected, not ignored
    let foreign: &[&str] = match objective {
        Objective::Simcse(_) => &["lambda_bt", "lambda_i", "lambda_v", "lambda_c", "vicreg_eps"],
        Objective::Barlow(_) => {
            &["temperature", "lambda_i", "lambda_v", "lambda_c", "vicreg_eps"]
        }
        Objective::VicReg(_) => &["temperature", "lambda_bt"],
    };
    for key in foreign {
        if reader.map.contains_key(*key) {
            return Err(reader.err(format!(
                "key {key} does not apply to objective {}",
                objective.name()
            )));
        }
    }
    Ok(objective)
}

fn parse_augment(reader: &mut KvReader) -> Result<AugmentKind, CliError> {
    match reader.required("augment")?.as_str() {
        "dropout" => Ok(AugmentKind::Dropout),
        "shuffle" => Ok(AugmentKind::Shuffle),
        "eda" => Ok(AugmentKind::Eda),
        "supervised" => Ok(AugmentKind::Supervised),
        other => Err(reader.err(format!("unknown augment {other:?}"))),
    }
}

fn parse_dims(reader: &mut KvReader) -> Result<EncoderDims, CliError> {
    let default = EncoderDims::default();
    let d_tok = reader.opt("d_tok", default.d_tok)?;
    let hidden = match reader.get("hidden_dims") {
        None => default.hidden,
        Some(raw) => raw
            .split(',')
            .map(|s| reader.parse_value("hidden_dims", s.trim()))
            .collect::<Result<Vec<usize>, _>>()?,
    };
    let d_e = reader.opt("d_e", default.d_e)?;
    let proj_dim = reader.opt("proj_dim", default.proj_dim)?;
    Ok(EncoderDims {
        d_tok,
        hidden,
        d_e,
        proj_dim,
    })
}

/// Shared body of train-config and sweep-space files. Returns the config and
/// the optional thesaurus path.
fn parse_train_fields(
    reader: &mut KvReader,
    require_run_keys: bool,
) -> Result<(TrainConfig, Option<PathBuf>), CliError> {
    let objective = parse_objective(reader)?;
    let augment = parse_augment(reader)?;
    let default = TrainConfig::default();
    let learning_rate = if require_run_keys {
        let raw = reader.required("learning_rate")?;
        reader.parse_value("learning_rate", &raw)?
    } else {
        reader.opt("learning_rate", default.learning_rate)?
    };
    let seed = if require_run_keys {
        let raw = reader.required("seed")?;
        reader.parse_value("seed", &raw)?
    } else {
        reader.opt("seed", default.seed)?
    };
    let cfg = TrainConfig {
        objective,
        augment,
        p_do: reader.opt("p_do", default.p_do)?,
        p_s: reader.opt("p_s", default.p_s)?,
        alpha: reader.opt("alpha", default.alpha)?,
        learning_rate,
        batch_size: reader.opt("batch_size", default.batch_size)?,
        epochs: reader.opt("epochs", default.epochs)?,
        eval_every: reader.opt("eval_every", default.eval_every)?,
        seed,
        dims: parse_dims(reader)?,
    };
    let thesaurus = reader.get("thesaurus").map(PathBuf::from);
    Ok((cfg, thesaurus))
}

pub fn parse_train_config(
    path: &Path,
    text: &str,
) -> Result<(TrainConfig, Option<PathBuf>), CliError> {
    let mut reader = KvReader::parse(path, text)?;
    let out = parse_train_fields(&mut reader, true)?;
    reader.finish()?;
    out.0.validate()?;
    Ok(out)
}

/// Renders every applicable key of a config in a fixed order.
pub fn train_config_kv(cfg: &TrainConfig, thesaurus: Option<&Path>) -> Vec<(String, String)> {
    let mut kv: Vec<(String, String)> = Vec::new();
    kv.push(("objective".into(), cfg.objective.name().into()));
    match cfg.objective {
        Objective::Simcse(c) => kv.push(("temperature".into(), c.temperature.to_string())),
        Objective::Barlow(c) => kv.push(("lambda_bt".into(), c.lambda_bt.to_string())),
        Objective::VicReg(c) => {
            kv.push(("lambda_i".into(), c.lambda_i.to_string()));
            kv.push(("lambda_v".into(), c.lambda_v.to_string()));
            kv.push(("lambda_c".into(), c.lambda_c.to_string()));
            kv.push(("vicreg_eps".into(), c.eps.to_string()));
        }
    }
    kv.push(("augment".into(), cfg.augment.name().into()));
    kv.push(("p_do".into(), cfg.p_do.to_string()));
    kv.push(("p_s".into(), cfg.p_s.to_string()));
    kv.push(("alpha".into(), cfg.alpha.to_string()));
    kv.push(("learning_rate".into(), cfg.learning_rate.to_string()));
    kv.push(("batch_size".into(), cfg.batch_size.to_string()));
    kv.push(("epochs".into(), cfg.epochs.to_string()));
    kv.push(("eval_every".into(), cfg.eval_every.to_string()));
    kv.push(("seed".into(), cfg.seed.to_string()));
    kv.push(("d_tok".into(), cfg.dims.d_tok.to_string()));
    kv.push((
        "hidden_dims".into(),
        cfg.dims
            .hidden
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
    ));
    kv.push(("d_e".into(), cfg.dims.d_e.to_string()));
    kv.push(("proj_dim".into(), cfg.dims.proj_dim.to_string()));
    if let Some(p) = thesaurus {
        kv.push(("thesaurus".into(), p.display().to_string()));
    }
    kv
}

fn render_kv_file(kv: &[(String, String)], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for (k, v) in kv {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(config: &Path, corpus: &Path, dev: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(config).map_err(|source| CliError::Io {
        path: config.to_path_buf(),
        source,
    })?;
    let (cfg, thesaurus_path) = parse_train_config(config, &text)?;
    let thesaurus = match &thesaurus_path {
        Some(p) => Thesaurus::load(p)?,
        None => Thesaurus::new(),
    };
    let dev_pairs = load_scored_pairs(dev)?;

    ensure_dir(out)?;
    let outcome = if cfg.augment == AugmentKind::Supervised {
        let pairs = load_positive_pairs(corpus)?;
        train(&cfg, TrainData::Pairs(&pairs), &dev_pairs, &thesaurus)?
    } else {
        let corpus_data = load_corpus(corpus)?;
        train(
            &cfg,
            TrainData::Corpus(&corpus_data.sentences),
            &dev_pairs,
            &thesaurus,
        )?
    };

    outcome.model.save(&out.join("checkpoint.dimcon"))?;
    write_file(&out.join("history.csv"), &outcome.history.to_csv())?;
    let resolved = render_kv_file(
        &train_config_kv(&cfg, thesaurus_path.as_deref()),
        &[
            format!("corpus = {}", corpus.display()),
            format!("dev = {}", dev.display()),
        ],
    );
    write_file(&out.join("config.resolved"), &resolved)?;
    println!(
        "best dev spearman {:.6} at step {}",
        outcome.history.best_dev_spearman, outcome.history.best_step
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(checkpoint: &Path, pairs: &Path, metrics: &str, out: &Path) -> Result<(), CliError> {
    let requested: Vec<&str> = metrics.split(',').map(str::trim).collect();
    for m in &requested {
        if !matches!(*m, "sts" | "align" | "unif" | "hist") {
            return Err(CliError::Usage(format!(
                "unknown metric {m:?}; expected sts, align, unif, hist"
            )));
        }
    }
    let model = Model::load(checkpoint)?;
    let scored = load_scored_pairs(pairs)?;
    ensure_dir(out)?;

    let mut lines = String::from("metric,value\n");
    for m in &requested {
        match *m {
            "sts" => {
                let rho = sts_eval(&model, &scored)?;
                lines.push_str(&format!("sts,{rho}\n"));
            }
            "align" => {
                let positives: Vec<(String, String)> = scored
                    .iter()
                    .map(|p| (p.sentence_a.clone(), p.sentence_b.clone()))
                    .collect();
                let a = alignment(&model, &positives)?;
                lines.push_str(&format!("align,{a}\n"));
            }
            "unif" => {
                // unique sentences in order of first appearance
                let mut seen = BTreeSet::new();
                let mut sentences = Vec::new();
                for p in &scored {
                    for s in [&p.sentence_a, &p.sentence_b] {
                        if seen.insert(s.clone()) {
                            sentences.push(s.clone());
                        }
                    }
                }
                let u = uniformity(&model, &sentences)?;
                lines.push_str(&format!("unif,{u}\n"));
            }
            "hist" => {
                let edges = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
                let report = similarity_histogram(&model, &scored, &edges, 40)?;
                write_file(&out.join("histogram.csv"), &report.to_csv())?;
            }
            _ => unreachable!("validated above"),
        }
    }
    write_file(&out.join("metrics.csv"), &lines)?;
    let resolved = render_kv_file(
        &[
            ("checkpoint".into(), checkpoint.display().to_string()),
            ("pairs".into(), pairs.display().to_string()),
            ("metrics".into(), requested.join(",")),
        ],
        &[],
    );
    write_file(&out.join("eval.resolved"), &resolved)?;
    print!("{lines}");
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SpaceFile {
    space: SweepSpace,
    thesaurus: Option<PathBuf>,
    corpus: PathBuf,
    dev: PathBuf,
}

fn parse_space_file(path: &Path) -> Result<SpaceFile, CliError> {
    let mut reader = KvReader::load(path)?;
    let corpus = PathBuf::from(reader.required("corpus")?);
    let dev = PathBuf::from(reader.required("dev")?);
    let (base, thesaurus) = parse_train_fields(&mut reader, false)?;
    let mut space = SweepSpace::with_base(base);
    if let Some(lrs) = reader.opt_list("learning_rates")? {
        space.learning_rates = lrs;
    }
    if let Some(grid) = reader.opt_list("augment_grid")? {
        space.augment_grid = grid;
    }
    if let Some(grid) = reader.opt_list("lambda_bt_grid")? {
        space.lambda_bt_grid = grid;
    }
    if let Some(range) = reader.opt_list("log10_lambda_c")? {
        if range.len() != 2 {
            return Err(reader.err("log10_lambda_c needs exactly two values".into()));
        }
        space.log10_lambda_c = (range[0], range[1]);
    }
    if let Some(range) = reader.opt_list("log10_lambda_v")? {
        if range.len() != 2 {
            return Err(reader.err("log10_lambda_v needs exactly two values".into()));
        }
        space.log10_lambda_v = (range[0], range[1]);
    }
    reader.finish()?;
    Ok(SpaceFile {
        space,
        thesaurus,
        corpus,
        dev,
    })
}

/// One line of the trial-result file.
pub struct TrialRecord {
    pub id: usize,
    pub config_kv: String,
    pub best_dev_spearman: f64,
    pub best_step: u64,
    pub seconds: f64,
}

impl TrialRecord {
    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\n",
            self.id, self.config_kv, self.best_dev_spearman, self.best_step, self.seconds
        )
    }
}

pub const TRIALS_HEADER: &str = "trial_id\tconfig\tbest_dev_spearman\tbest_step\tseconds\n";

fn run_trial(
    trial: &TrialConfig,
    data: TrainData<'_>,
    dev: &[crate::datakit::ScoredPair],
    thesaurus: &Thesaurus,
    thesaurus_path: Option<&Path>,
) -> Result<TrialRecord, CliError> {
    let start = Instant::now();
    let outcome = train(&trial.config, data, dev, thesaurus)?;
    let seconds = start.elapsed().as_secs_f64();
    let config_kv = train_config_kv(&trial.config, thesaurus_path)
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(TrialRecord {
        id: trial.id,
        config_kv,
        best_dev_spearman: outcome.history.best_dev_spearman,
        best_step: outcome.history.best_step,
        seconds,
    })
}

fn cmd_sweep(
    space_path: &Path,
    strategy: &str,
    budget: Option<usize>,
    seed: u64,
    out: &Path,
    jobs: usize,
) -> Result<(), CliError> {
    let strategy = match strategy {
        "grid" => SweepStrategy::Grid,
        "random" => {
            let budget = budget
                .ok_or_else(|| CliError::Usage("the random strategy requires --budget".into()))?;
            SweepStrategy::Random { budget }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown strategy {other:?}; expected grid or random"
            )))
        }
    };
    let file = parse_space_file(space_path)?;
    let trials = enumerate_trials(&file.space, &strategy, seed)?;
    let thesaurus = match &file.thesaurus {
        Some(p) => Thesaurus::load(p)?,
        None => Thesaurus::new(),
    };

    // load data once, shared read-only across workers
    let supervised = file.space.base.augment == AugmentKind::Supervised;
    let corpus_data;
    let pair_data;
    let data: TrainData<'_> = if supervised {
        pair_data = load_positive_pairs(&file.corpus)?;
        TrainData::Pairs(&pair_data)
    } else {
        corpus_data = load_corpus(&file.corpus)?;
        TrainData::Corpus(&corpus_data.sentences)
    };
    let dev = load_scored_pairs(&file.dev)?;

    ensure_dir(out)?;
    let jobs = jobs.max(1).min(trials.len().max(1));
    let results: Mutex<Vec<Option<TrialRecord>>> =
        Mutex::new((0..trials.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= trials.len() {
                    break;
                }
                match run_trial(
                    &trials[i],
                    data,
                    &dev,
                    &thesaurus,
                    file.thesaurus.as_deref(),
                ) {
                    Ok(record) => {
                        results.lock().expect("results lock")[i] = Some(record);
                    }
                    Err(e) => {
                        let mut slot = failure.lock().expect("failure lock");
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    let records = results.into_inner().expect("results lock");
    let mut content = String::from(TRIALS_HEADER);
    for record in records.iter() {
        let record = record.as_ref().expect("all trials completed");
        content.push_str(&record.to_tsv_line());
    }
    write_file(&out.join("trials.tsv"), &content)?;

    let mut resolved = render_kv_file(
        &train_config_kv(&file.space.base, file.thesaurus.as_deref()),
        &[
            format!("corpus = {}", file.corpus.display()),
            format!("dev = {}", file.dev.display()),
            format!(
                "strategy = {strategy:?}, master seed = {seed}, trials = {}",
                trials.len()
            ),
        ],
    );
    resolved.push_str(&format!(
        "learning_rates = {}\naugment_grid = {}\nlambda_bt_grid = {}\nlog10_lambda_c = {},{}\nlog10_lambda_v = {},{}\n",
        join_f64(&file.space.learning_rates),
        join_f64(&file.space.augment_grid),
        join_f64(&file.space.lambda_bt_grid),
        file.space.log10_lambda_c.0,
        file.space.log10_lambda_c.1,
        file.space.log10_lambda_v.0,
        file.space.log10_lambda_v.1,
    ));
    write_file(&out.join("space.resolved"), &resolved)?;
    println!(
        "{} trials written to {}",
        records.len(),
        out.join("trials.tsv").display()
    );
    Ok(())
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn parse_synth_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let mut reader = KvReader::load(path)?;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        clusters: reader.opt("clusters", d.clusters)?,
        vocab_size: reader.opt("vocab_size", d.vocab_size)?,
        sentence_len: (
            reader.opt("len_lo", d.sentence_len.0)?,
            reader.opt("len_hi", d.sentence_len.1)?,
        ),
        intra_rate: reader.opt("intra_rate", d.intra_rate)?,
        inter_rate: reader.opt("inter_rate", d.inter_rate)?,
        sentences: reader.opt("sentences", d.sentences)?,
        scored_pairs: reader.opt("scored_pairs", d.scored_pairs)?,
        positive_pairs: reader.opt("positive_pairs", d.positive_pairs)?,
        seed: reader.opt("seed", d.seed)?,
    };
    reader.finish()?;
    Ok(spec)
}

fn cmd_synth(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let spec = parse_synth_spec(spec_path)?;
    let data = synth_generate(&spec)?;
    ensure_dir(out)?;
    write_corpus(&out.join("corpus.txt"), &data.corpus)?;
    write_scored_pairs(&out.join("dev_pairs.tsv"), &data.scored_pairs)?;
    write_positive_pairs(&out.join("positive_pairs.tsv"), &data.positive_pairs)?;
    write_file(&out.join("thesaurus.tsv"), &data.thesaurus.to_file_string())?;
    let resolved = render_kv_file(
        &[
            ("clusters".into(), spec.clusters.to_string()),
            ("vocab_size".into(), spec.vocab_size.to_string()),
            ("len_lo".into(), spec.sentence_len.0.to_string()),
            ("len_hi".into(), spec.sentence_len.1.to_string()),
            ("intra_rate".into(), spec.intra_rate.to_string()),
            ("inter_rate".into(), spec.inter_rate.to_string()),
            ("sentences".into(), spec.sentences.to_string()),
            ("scored_pairs".into(), spec.scored_pairs.to_string()),
            ("positive_pairs".into(), spec.positive_pairs.to_string()),
            ("seed".into(), spec.seed.to_string()),
        ],
        &[],
    );
    write_file(&out.join("spec.resolved"), &resolved)?;
    println!(
        "wrote {} sentences, {} scored pairs, {} positive pairs to {}",
        data.corpus.sentences.len(),
        data.scored_pairs.len(),
        data.positive_pairs.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Percentile by linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Per group: max, 75th percentile, median of best dev Spearman.
pub fn aggregate_trials(
    rows: &[(String, f64)],
    group_by: &str,
) -> Result<Vec<(String, f64, f64, f64)>, CliError> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (config_kv, value) in rows {
        for part in config_kv.split_whitespace() {
            if let Some((k, v)) = part.split_once('=') {
                if k == group_by {
                    groups.entry(v.to_string()).or_default().push(*value);
                }
            }
        }
    }
    if groups.is_empty() {
        return Err(CliError::EmptyGroup(group_by.to_string()));
    }
    let mut keys: Vec<String> = groups.keys().cloned().collect();
    // numeric sort when every key parses as a number
    let numeric: Option<Vec<f64>> = keys.iter().map(|k| k.parse().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(keys).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite keys"));
        keys = pairs.into_iter().map(|(_, k)| k).collect();
    } else {
        keys.sort();
    }
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let mut values = groups.remove(&key).expect("key from groups");
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let max = *values.last().expect("non-empty group");
        let q75 = percentile(&values, 0.75);
        let q50 = percentile(&values, 0.50);
        out.push((key, max, q75, q50));
    }
    Ok(out)
}

fn parse_trials_file(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with("trial_id\t") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CliError::Trials {
                path: path.to_path_buf(),
                reason: format!("line {}: expected 5 tab-separated fields", i + 1),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| CliError::Trials {
            path: path.to_path_buf(),
            reason: format!("line {}: bad best_dev_spearman {:?}", i + 1, fields[2]),
        })?;
        rows.push((fields[1].to_string(), value));
    }
    if rows.is_empty() {
        return Err(CliError::Trials {
            path: path.to_path_buf(),
            reason: "no trial rows".into(),
        });
    }
    Ok(rows)
}

fn cmd_report(trials: &Path, group_by: &str, out: &Path) -> Result<(), CliError> {
    let rows = parse_trials_file(trials)?;
    let table = aggregate_trials(&rows, group_by)?;
    let mut content = String::from("group,max,q75,q50\n");
    for (group, max, q75, q50) in &table {
        content.push_str(&format!("{group},{max},{q75},{q50}\n"));
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_file(out, &content)?;
    let resolved = render_kv_file(
        &[
            ("trials".into(), trials.display().to_string()),
            ("group_by".into(), group_by.to_string()),
        ],
        &[],
    );
    write_file(
        &PathBuf::from(format!("{}.resolved", out.display())),
        &resolved,
    )?;
    print!("{content}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_linear_interpolation() {
        let values = [0.1, 0.2, 0.3, 0.4];
        assert!((percentile(&values, 0.75) - 0.325).abs() < 1e-12);
        assert!((percentile(&values, 0.50) - 0.25).abs() < 1e-12);
        assert_eq!(percentile(&values, 1.0), 0.4);
        assert_eq!(percentile(&[0.7], 0.75), 0.7);
    }

    #[test]
    fn aggregate_single_trial_group() {
        let rows = vec![("augment=shuffle p_s=0.3".to_string(), 0.55)];
        let table = aggregate_trials(&rows, "p_s").unwrap();
        assert_eq!(table, vec![("0.3".to_string(), 0.55, 0.55, 0.55)]);
    }

    #[test]
    fn aggregate_matches_percentile_oracle() {
        let rows = vec![
            ("p_s=0.3".to_string(), 0.1),
            ("p_s=0.3".to_string(), 0.2),
            ("p_s=0.3".to_string(), 0.3),
            ("p_s=0.3".to_string(), 0.4),
        ];
        let table = aggregate_trials(&rows, "p_s").unwrap();
        assert_eq!(table.len(), 1);
        let (_, max, q75, q50) = &table[0];
        assert_eq!(*max, 0.4);
        assert!((q75 - 0.325).abs() < 1e-12);
        assert!((q50 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_permutation_invariant_and_counts_groups() {
        let mut rows = vec![
            ("lr=1e-5 p_s=0.1".to_string(), 0.3),
            ("lr=2e-5 p_s=0.1".to_string(), 0.5),
            ("lr=1e-5 p_s=0.5".to_string(), 0.4),
            ("lr=2e-5 p_s=0.5".to_string(), 0.2),
        ];
        let a = aggregate_trials(&rows, "p_s").unwrap();
        rows.reverse();
        let b = aggregate_trials(&rows, "p_s").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn aggregate_missing_key_is_empty_group() {
        let rows = vec![("lr=1e-5".to_string(), 0.3)];
        assert!(matches!(
            aggregate_trials(&rows, "p_s"),
            Err(CliError::EmptyGroup(_))
        ));
    }

    #[test]
    fn train_config_parses_and_rejects_unknown_keys() {
        let text = "objective = barlow\naugment = shuffle\np_s = 0.3\nlearning_rate = 1e-3\nseed = 5\nlambda_bt = 0.005\n";
        let (cfg, _) = parse_train_config(Path::new("test.cfg"), text).unwrap();
        assert_eq!(cfg.augment, AugmentKind::Shuffle);
        assert_eq!(cfg.p_s, 0.3);
        match cfg.objective {
            Objective::Barlow(c) => assert_eq!(c.lambda_bt, 0.005),
            _ => panic!("wrong objective"),
        }

        let bad = format!("{text}mystery = 1\n");
        let err = parse_train_config(Path::new("test.cfg"), &bad).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn train_config_rejects_foreign_objective_keys() {
        let text =
            "objective = simcse\naugment = dropout\nlearning_rate = 1e-3\nseed = 1\nlambda_bt = 0.005\n";
        let err = parse_train_config(Path::new("t.cfg"), text).unwrap_err();
        assert!(err.to_string().contains("lambda_bt"), "{err}");
    }

    #[test]
    fn train_config_requires_run_keys() {
        let text = "objective = simcse\naugment = dropout\nseed = 1\n";
        let err = parse_train_config(Path::new("t.cfg"), text).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn resolved_config_roundtrips() {
        let text = "objective = vicreg\naugment = eda\nalpha = 0.2\nlearning_rate = 0.002\nseed = 9\nlambda_v = 30\nlambda_c = 0.01\nbatch_size = 32\n";
        let (cfg, th) = parse_train_config(Path::new("t.cfg"), text).unwrap();
        let rendered = render_kv_file(&train_config_kv(&cfg, th.as_deref()), &[]);
        let (cfg2, _) = parse_train_config(Path::new("t2.cfg"), &rendered).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn dispatch_rejects_unknown_subcommand_and_missing_flags() {
        assert_ne!(dispatch(["bogus".to_string()]), 0);
        // train with missing --dev
        let args: Vec<String> = ["train", "--config", "c", "--corpus", "p", "--out", "o"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_ne!(dispatch(args), 0);
    }
}
