//! Augmentation strategies that create the two views of each sentence:
//! dropout-only (identical tokens, independent encoder seeds), partial token
//! shuffling, EDA (synonym replacement, random insertion, random swap,
//! random deletion), and the supervised positive-pair mode.
//!
//! Every augmentation is a deterministic function of (input, parameters,
//! seed); callers parallelize by deriving per-sentence seeds.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{split_text, EncoderError};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("sentence is empty after tokenization")]
    EmptySentence,
    #[error("supervised strategy requires a positive pair")]
    MissingPair,
    #[error("augment parameter out of range: {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("thesaurus parse error at line {line}: {reason}")]
    ThesaurusParse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<EncoderError> for AugmentError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::EmptySentence => AugmentError::EmptySentence,
            other => panic!("unexpected encoder error during augmentation: {other}"),
        }
    }
}

/// Which augmentation builds the two views, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentStrategy {
    /// Identical token lists; the views differ only through encoder dropout
    /// seeds drawn at the given probability.
    Dropout { p_do: f64 },
    /// A fraction p_s of positions is selected and randomly permuted,
    /// independently per branch.
    Shuffle { p_s: f64 },
    /// Synonym replacement, random insertion, random swap, and random
    /// deletion, each parameterized by alpha, independently per branch.
    Eda { alpha: f64 },
    /// View A and B are the two sentences of a supplied positive pair.
    Supervised,
}

impl AugmentStrategy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        match *self {
            AugmentStrategy::Dropout { p_do } => {
                if !(0.0..1.0).contains(&p_do) {
                    return Err(AugmentError::BadParameter {
                        name: "p_do",
                        value: p_do,
                    });
                }
            }
            AugmentStrategy::Shuffle { p_s } => {
                if !(0.0..=1.0).contains(&p_s) {
                    return Err(AugmentError::BadParameter {
                        name: "p_s",
                        value: p_s,
                    });
                }
            }
            AugmentStrategy::Eda { alpha } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(AugmentError::BadParameter {
                        name: "alpha",
                        value: alpha,
                    });
                }
            }
            AugmentStrategy::Supervised => {}
        }
        Ok(())
    }
}

/// Word -> synonym list. No word is its own synonym; stored lists are
/// non-empty.
#[derive(Debug, Clone, Default)]
pub struct Thesaurus {
    map: HashMap<String, Vec<String>>,
}

impl Thesaurus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: String, synonyms: Vec<String>) {
        let synonyms: Vec<String> = synonyms.into_iter().filter(|s| *s != word).collect();
        if !synonyms.is_empty() {
            self.map.insert(word, synonyms);
        }
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.map.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Loads UTF-8 lines of the form `word<TAB>syn1,syn2,...`.
    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut out = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or(AugmentError::ThesaurusParse {
                line: i + 1,
                reason: "expected word<TAB>synonyms".into(),
            })?;
            if word.is_empty() {
                return Err(AugmentError::ThesaurusParse {
                    line: i + 1,
                    reason: "empty word".into(),
                });
            }
            let synonyms: Vec<String> = syns
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if synonyms.is_empty() {
                return Err(AugmentError::ThesaurusParse {
                    line: i + 1,
                    reason: "no synonyms listed".into(),
                });
            }
            out.insert(word.to_string(), synonyms);
        }
        Ok(out)
    }

    /// Serializes in sorted word order.
    pub fn to_file_string(&self) -> String {
        let mut words: Vec<&String> = self.map.keys().collect();
        words.sort();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            out.push('\t');
            out.push_str(&self.map[w].join(","));
            out.push('\n');
        }
        out
    }
}

/// round(x) with ties at .5 going to the even integer.
pub(crate) fn round_half_even(x: f64) -> usize {
    let floor = x.floor();
    let frac = x - floor;
    let base = floor as i64;
    let r = if frac > 0.5 {
        base + 1
    } else if frac < 0.5 {
        base
    } else if base % 2 == 0 {
        base
    } else {
        base + 1
    };
    r.max(0) as usize
}

/// Selects k = round(p_s * L) distinct positions uniformly and applies a
/// uniformly random permutation to the tokens at those positions; all other
/// positions are untouched. k <= 1 degenerates to the identity.
pub fn shuffle_tokens(tokens: &[String], p_s: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let l = tokens.len();
    let mut out = tokens.to_vec();
    let k = round_half_even(p_s * l as f64).min(l);
    if k <= 1 {
        return out;
    }
    // choose k distinct positions: partial Fisher-Yates over index vector
    let mut indices: Vec<usize> = (0..l).collect();
    for i in 0..k {
        let j = rng.gen_range(i..l);
        indices.swap(i, j);
    }
    let chosen = &indices[..k];
    // uniformly random permutation of the chosen positions
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let picked: Vec<String> = chosen.iter().map(|&p| tokens[p].clone()).collect();
    for (slot, &src) in chosen.iter().zip(perm.iter()) {
        out[*slot] = picked[src].clone();
    }
    out
}

/// EDA: synonym replacement, random insertion, random swap, then random
/// deletion, in that fixed order. n = max(1, round(alpha * L)) for the first
/// three operations; deletion is per-token Bernoulli(alpha) with a floor of
/// one surviving token.
pub fn eda_augment(
    tokens: &[String],
    alpha: f64,
    thesaurus: &Thesaurus,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let l = tokens.len();
    if l == 0 {
        return Vec::new();
    }
    let n = round_half_even(alpha * l as f64).max(1);
    let mut current = tokens.to_vec();

    // synonym replacement: n tokens with thesaurus entries replaced
    let eligible: Vec<usize> = (0..current.len())
        .filter(|&i| thesaurus.synonyms(&current[i]).is_some())
        .collect();
    if !eligible.is_empty() {
        let mut pool = eligible;
        for i in 0..n.min(pool.len()) {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
            let pos = pool[i];
            let syns = thesaurus.synonyms(&current[pos]).expect("eligible position");
            let pick = rng.gen_range(0..syns.len());
            current[pos] = syns[pick].clone();
        }
    }

    // random insertion: n synonyms of random tokens inserted at random spots
    for _ in 0..n {
        let with_syns: Vec<usize> = (0..current.len())
            .filter(|&i| thesaurus.synonyms(&current[i]).is_some())
            .collect();
        if with_syns.is_empty() {
            break;
        }
        let src = with_syns[rng.gen_range(0..with_syns.len())];
        let syns = thesaurus.synonyms(&current[src]).expect("has synonyms");
        let word = syns[rng.gen_range(0..syns.len())].clone();
        let at = rng.gen_range(0..=current.len());
        current.insert(at, word);
    }

    // random swap: n position-pair swaps
    for _ in 0..n {
        if current.len() < 2 {
            break;
        }
        let a = rng.gen_range(0..current.len());
        let b = rng.gen_range(0..current.len());
        current.swap(a, b);
    }

    // random deletion: per-token Bernoulli(alpha), retaining at least one
    let mut kept: Vec<String> = Vec::with_capacity(current.len());
    for tok in &current {
        if rng.gen::<f64>() >= alpha {
            kept.push(tok.clone());
        }
    }
    if kept.is_empty() {
        let keep = rng.gen_range(0..current.len());
        kept.push(current[keep].clone());
    }
    kept
}

/// Input to view construction: an unsupervised sentence or a positive pair.
#[derive(Debug, Clone, Copy)]
pub enum ViewSource<'a> {
    Sentence(&'a str),
    Pair(&'a str, &'a str),
}

/// One view: its token strings plus the encoder dropout seed.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub tokens: Vec<String>,
    pub encoder_seed: u64,
}

/// Builds the two views of a data point.
///
/// Dropout: identical token lists, two independent encoder seeds.
/// Shuffle/EDA: each branch augmented independently with its own draw.
/// Supervised: view A and B are the pair's sentences, no textual change.
pub fn make_views(
    source: ViewSource<'_>,
    strategy: &AugmentStrategy,
    thesaurus: &Thesaurus,
    rng: &mut ChaCha8Rng,
) -> Result<(View, View), AugmentError> {
    strategy.validate()?;
    let seed_a = rng.gen::<u64>();
    let seed_b = rng.gen::<u64>();
    match (strategy, source) {
        (AugmentStrategy::Supervised, ViewSource::Pair(a, b)) => Ok((
            View {
                tokens: split_text(a)?,
                encoder_seed: seed_a,
            },
            View {
                tokens: split_text(b)?,
                encoder_seed: seed_b,
            },
        )),
        (AugmentStrategy::Supervised, ViewSource::Sentence(_)) => Err(AugmentError::MissingPair),
        (strategy, ViewSource::Sentence(s)) => {
            let tokens = split_text(s)?;
            let (tokens_a, tokens_b) = match *strategy {
                AugmentStrategy::Dropout { .. } => (tokens.clone(), tokens),
                AugmentStrategy::Shuffle { p_s } => {
                    let a = shuffle_tokens(&tokens, p_s, rng);
                    let b = shuffle_tokens(&tokens, p_s, rng);
                    (a, b)
                }
                AugmentStrategy::Eda { alpha } => {
                    let a = eda_augment(&tokens, alpha, thesaurus, rng);
                    let b = eda_augment(&tokens, alpha, thesaurus, rng);
                    (a, b)
                }
                AugmentStrategy::Supervised => unreachable!("handled above"),
            };
            Ok((
                View {
                    tokens: tokens_a,
                    encoder_seed: seed_a,
                },
                View {
                    tokens: tokens_b,
                    encoder_seed: seed_b,
                },
            ))
        }
        (_, ViewSource::Pair(a, _)) => {
            // unsupervised strategies use only the first sentence of a pair
            make_views(ViewSource::Sentence(a), strategy, thesaurus, rng)
        }
    }
}
