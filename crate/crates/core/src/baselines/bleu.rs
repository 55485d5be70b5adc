//! BLEU against a pooled reference corpus, and self-BLEU.
//!
//! Every candidate sentence is scored against the whole reference corpus at
//! once: an n-gram's clip count is its largest count in any single reference
//! sentence, and the brevity penalty uses the reference length closest to the
//! candidate length (the shorter one on ties). Zero precisions are floored at
//! [`ZERO_PRECISION_FLOOR`]. Orders longer than the candidate have no n-grams
//! and are left out of the geometric mean, so a candidate that appears
//! verbatim among the references scores exactly 1.
//!
//! The corpus score is the mean of the sentence scores. End-of-sentence
//! markers are not part of the n-grams.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSequence};
use crate::error::{data_err, invalid, Result};
use crate::rng;
use crate::stats::CompensatedSum;

pub const ZERO_PRECISION_FLOOR: f64 = 1e-9;
pub const DEFAULT_MAX_N: usize = 5;
pub const DEFAULT_SELF_BLEU_CAP: usize = 1000;

fn ngram_counts(words: &[u32], n: usize) -> HashMap<&[u32], u32> {
    let mut m = HashMap::new();
    if words.len() >= n {
        for g in words.windows(n) {
            *m.entry(g).or_default() += 1;
        }
    }
    m
}

/// Closest length in a multiset of lengths (shorter on ties).
fn closest_length(lengths: &BTreeMap<usize, usize>, c: usize) -> Option<usize> {
    let below = lengths.range(..=c).next_back().map(|(&l, _)| l);
    let above = lengths.range(c..).next().map(|(&l, _)| l);
    match (below, above) {
        (Some(b), Some(a)) => Some(if c - b <= a - c { b } else { a }),
        (x, y) => x.or(y),
    }
}

/// Geometric mean of modified precisions times the brevity penalty.
fn combine(precisions: &[(u32, u32)], cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 || precisions.is_empty() {
        return 0.0;
    }
    let w = 1.0 / precisions.len() as f64;
    let log_p: f64 = precisions
        .iter()
        .map(|&(clipped, total)| {
            let p = clipped as f64 / total as f64;
            w * p.max(ZERO_PRECISION_FLOOR).ln()
        })
        .sum();
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_p.exp()
}

/// Pooled clip counts and lengths of a reference corpus.
#[derive(Debug, Clone)]
pub struct ReferenceSet<'a> {
    max_n: usize,
    clip: Vec<HashMap<&'a [u32], u32>>,
    lengths: BTreeMap<usize, usize>,
}

impl<'a> ReferenceSet<'a> {
    pub fn new(references: &'a [TokenSequence], max_n: usize) -> Result<Self> {
        if max_n < 1 {
            return Err(invalid!("BLEU order must be at least 1"));
        }
        if references.is_empty() {
            return Err(data_err!("BLEU needs at least one reference"));
        }
        let mut clip: Vec<HashMap<&[u32], u32>> = vec![HashMap::new(); max_n];
        let mut lengths = BTreeMap::new();
        for r in references {
            let words = r.words();
            *lengths.entry(words.len()).or_default() += 1;
            for n in 1..=max_n {
                for (g, c) in ngram_counts(words, n) {
                    let e = clip[n - 1].entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
        }
        Ok(ReferenceSet { max_n, clip, lengths })
    }

    pub fn sentence_bleu(&self, candidate: &[u32]) -> f64 {
        let orders = self.max_n.min(candidate.len());
        let precisions: Vec<(u32, u32)> = (1..=orders)
            .map(|n| {
                let counts = ngram_counts(candidate, n);
                let clipped = counts
                    .iter()
                    .map(|(g, &c)| c.min(self.clip[n - 1].get(g).copied().unwrap_or(0)))
                    .sum();
                (clipped, (candidate.len() + 1 - n) as u32)
            })
            .collect();
        let r = closest_length(&self.lengths, candidate.len()).unwrap_or(0);
        combine(&precisions, candidate.len(), r)
    }
}

/// Mean sentence BLEU of `candidates` against the pooled `references`.
pub fn bleu(candidates: &Corpus, references: &Corpus, max_n: usize) -> Result<f64> {
    if max_n < 1 {
        return Err(invalid!("BLEU order must be at least 1"));
    }
    if candidates.is_empty() {
        return Err(data_err!("BLEU needs at least one candidate"));
    }
    let refs = ReferenceSet::new(references.sequences(), max_n)?;
    let sum: CompensatedSum = candidates
        .sequences()
        .iter()
        .map(|c| refs.sentence_bleu(c.words()))
        .collect();
    Ok(sum.value() / candidates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfBleu {
    pub value: f64,
    /// Sentences actually scored (after subsampling).
    pub evaluated: usize,
    pub cap: usize,
    pub seed: u64,
}

/// Mean BLEU of each sentence against all the other sentences.
///
/// Corpora larger than `cap` are first subsampled to `cap` sentences with a
/// seeded shuffle; the comparison then runs within the subsample.
pub fn self_bleu(corpus: &Corpus, max_n: usize, cap: usize, seed: u64) -> Result<SelfBleu> {
    if max_n < 1 {
        return Err(invalid!("BLEU order must be at least 1"));
    }
    if corpus.len() < 2 {
        return Err(data_err!("self-BLEU needs at least two sentences"));
    }
    if cap < 2 {
        return Err(invalid!("self-BLEU cap must be at least 2"));
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    if idx.len() > cap {
        idx.shuffle(&mut rng::derived_rng(seed, "self-bleu", &[]));
        idx.truncate(cap);
        idx.sort_unstable();
    }
    let sents: Vec<&[u32]> = idx.iter().map(|&i| corpus.sequences()[i].words()).collect();

    // For every n-gram keep the two largest per-sentence counts and the owner
    // of the largest, so "max over all other sentences" is O(1).
    #[derive(Clone, Copy, Default)]
    struct Top2 {
        best: u32,
        owner: usize,
        second: u32,
    }
    let mut tops: Vec<HashMap<&[u32], Top2>> = vec![HashMap::new(); max_n];
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for (s, words) in sents.iter().enumerate() {
        *lengths.entry(words.len()).or_default() += 1;
        for n in 1..=max_n {
            for (g, c) in ngram_counts(words, n) {
                let t = tops[n - 1].entry(g).or_default();
                if c > t.best {
                    t.second = t.best;
                    t.best = c;
                    t.owner = s;
                } else if c > t.second {
                    t.second = c;
                }
            }
        }
    }

    let mut sum = CompensatedSum::new();
    for (s, words) in sents.iter().enumerate() {
        let orders = max_n.min(words.len());
        let precisions: Vec<(u32, u32)> = (1..=orders)
            .map(|n| {
                let clipped = ngram_counts(words, n)
                    .iter()
                    .map(|(g, &c)| {
                        let t = tops[n - 1][g];
                        let other = if t.owner == s { t.second } else { t.best };
                        c.min(other)
                    })
                    .sum();
                (clipped, (words.len() + 1 - n) as u32)
            })
            .collect();
        let own = words.len();
        let n_own = lengths[&own];
        if n_own == 1 {
            lengths.remove(&own);
        } else {
            *lengths.get_mut(&own).unwrap() -= 1;
        }
        let r = closest_length(&lengths, own).unwrap_or(0);
        *lengths.entry(own).or_default() += 1;
        sum.add(combine(&precisions, own, r));
    }
    Ok(SelfBleu {
        value: sum.value() / sents.len() as f64,
        evaluated: sents.len(),
        cap,
        seed,
    })
}
