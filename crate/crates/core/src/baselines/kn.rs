//! Interpolated Kneser-Ney n-gram language model.
//!
//! Sentences are padded on the left with `order - 1` BOS markers and end with
//! EOS. The highest order uses raw counts; lower orders use continuation
//! counts (the number of distinct left neighbours of an n-gram), except for
//! n-grams that begin with BOS, which have no real left context and keep
//! their raw counts. The unigram level is interpolated with the uniform
//! distribution over the emittable outcomes (UNK, EOS and the words), so
//! unseen words keep non-zero mass.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSequence, BOS, EOS};
use crate::error::{data_err, invalid, Result};
use crate::stats::CompensatedSum;
use crate::synthetic;

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_DISCOUNT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnConfig {
    pub order: usize,
    pub discount: f64,
}

impl Default for KnConfig {
    fn default() -> Self {
        KnConfig {
            order: DEFAULT_ORDER,
            discount: DEFAULT_DISCOUNT,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Level {
    /// n-gram -> count used at this level (raw or continuation).
    counts: HashMap<Vec<u32>, f64>,
    /// context -> sum of counts over its continuations.
    context_total: HashMap<Vec<u32>, f64>,
    /// context -> number of distinct continuations.
    context_types: HashMap<Vec<u32>, usize>,
}

/// n-gram counts up to a fixed order, smoothed with interpolated Kneser-Ney.
#[derive(Debug, Clone)]
pub struct NgramTable {
    config: KnConfig,
    vocab_len: usize,
    /// `levels[n - 1]` holds the n-gram statistics.
    levels: Vec<Level>,
}

fn padded(seq: &TokenSequence, order: usize) -> Vec<u32> {
    let mut t = vec![BOS; order - 1];
    t.extend_from_slice(seq.words());
    t.push(EOS);
    t
}

impl NgramTable {
    pub fn train(corpus: &Corpus, config: KnConfig) -> Result<Self> {
        if config.order < 1 {
            return Err(invalid!("n-gram order must be at least 1"));
        }
        if !(config.discount > 0.0 && config.discount < 1.0) {
            return Err(invalid!(
                "Kneser-Ney discount must lie in (0, 1), got {}",
                config.discount
            ));
        }
        if corpus.is_empty() {
            return Err(data_err!("cannot train a language model on an empty corpus"));
        }
        let n_max = config.order;
        let mut raw: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); n_max];
        let mut left: Vec<HashSet<(Vec<u32>, u32)>> = vec![HashSet::new(); n_max];
        for seq in corpus.sequences() {
            let t = padded(seq, n_max);
            for i in (n_max - 1)..t.len() {
                for n in 1..=n_max {
                    let g = t[i + 1 - n..=i].to_vec();
                    if n < n_max && g[0] != BOS {
                        left[n - 1].insert((g, t[i - n]));
                    } else {
                        *raw[n - 1].entry(g).or_default() += 1.0;
                    }
                }
            }
        }
        let mut levels = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let mut counts = std::mem::take(&mut raw[n - 1]);
            for (g, _) in left[n - 1].drain() {
                *counts.entry(g).or_default() += 1.0;
            }
            let mut level = Level::default();
            for (g, &c) in &counts {
                let ctx = g[..n - 1].to_vec();
                *level.context_total.entry(ctx.clone()).or_default() += c;
                *level.context_types.entry(ctx).or_default() += 1;
            }
            level.counts = counts;
            levels.push(level);
        }
        Ok(NgramTable {
            config,
            vocab_len: corpus.vocab().len(),
            levels,
        })
    }

    pub fn config(&self) -> KnConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Count stored at level `n` for an n-gram (0 if absent).
    pub fn count(&self, ngram: &[u32]) -> f64 {
        match ngram.len() {
            0 => 0.0,
            n if n > self.order() => 0.0,
            n => self.levels[n - 1].counts.get(ngram).copied().unwrap_or(0.0),
        }
    }

    /// Sum of the level-`n` counts that extend `context` (n = context length + 1).
    pub fn context_count(&self, context: &[u32]) -> f64 {
        let n = context.len() + 1;
        if n > self.order() {
            return 0.0;
        }
        self.levels[n - 1].context_total.get(context).copied().unwrap_or(0.0)
    }

    /// P(w | history), using the last `order - 1` tokens of `history`
    /// (left-padded with BOS when shorter).
    pub fn prob(&self, history: &[u32], w: u32) -> f64 {
        let k = self.order() - 1;
        let mut h = vec![BOS; k.saturating_sub(history.len())];
        h.extend_from_slice(&history[history.len().saturating_sub(k)..]);
        self.prob_at(&h, w)
    }

    fn prob_at(&self, h: &[u32], w: u32) -> f64 {
        let n = h.len() + 1;
        let lower = if h.is_empty() {
            1.0 / synthetic::outcome_count(self.vocab_len) as f64
        } else {
            self.prob_at(&h[1..], w)
        };
        let level = &self.levels[n - 1];
        let total = match level.context_total.get(h) {
            Some(&t) if t > 0.0 => t,
            _ => return lower,
        };
        let d = self.config.discount;
        let mut g = h.to_vec();
        g.push(w);
        let c = level.counts.get(&g).copied().unwrap_or(0.0);
        let types = level.context_types[h] as f64;
        (c - d).max(0.0) / total + d * types / total * lower
    }

    /// Mean negative log-likelihood per predicted token (words and EOS), in nats.
    pub fn score(&self, corpus: &Corpus) -> Result<f64> {
        if corpus.is_empty() {
            return Err(data_err!("cannot score an empty corpus"));
        }
        if corpus.vocab().len() != self.vocab_len {
            return Err(data_err!(
                "corpus vocabulary has {} entries, language model {}",
                corpus.vocab().len(),
                self.vocab_len
            ));
        }
        let k = self.order() - 1;
        let mut nll = CompensatedSum::new();
        let mut tokens = 0usize;
        for seq in corpus.sequences() {
            let t = padded(seq, self.order());
            for i in k..t.len() {
                nll.add(-self.prob_at(&t[i - k..i], t[i]).ln());
                tokens += 1;
            }
        }
        Ok(nll.value() / tokens as f64)
    }
}

/// Trains an LM on `train` and returns the mean per-token NLL of `scored`.
pub fn kn_score(train: &Corpus, scored: &Corpus, config: KnConfig) -> Result<f64> {
    if !train.same_vocab(scored) {
        return Err(data_err!("language model and scored corpus use different vocabularies"));
    }
    NgramTable::train(train, config)?.score(scored)
}
