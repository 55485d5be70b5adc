//! Small generator families used by the tests, the benchmarks and the
//! example experiment configuration.
//!
//! The `chain` reference is an acyclic order-1 chain over four words
//! `a b c d`, capped at five words:
//!
//! ```text
//! <s> -> a .5 | b .5
//! a   -> b .5 | c .5
//! b   -> c .5 | d .5
//! c   -> d .5 | </s> .5
//! d   -> </s> 1
//! ```
//!
//! Every sentence it emits has at most four words, so nothing is cut at the
//! cap, and its support is exactly the sentences with no forbidden bigram.

use std::sync::Arc;

use rand::Rng as _;

use crate::classifier::ClassifierConfig;
use crate::corpus::{Vocab, BOS, EOS, FIRST_WORD};
use crate::error::{invalid, Result};
use crate::harness::{
    BaselineConfig, ExperimentConfig, FamilySpec, Metric, NoiseSpec, OracleConfig, ReferenceSpec, SampleSizes,
    CONFIG_VERSION,
};
use crate::rng;
use crate::synthetic::{outcomes, MarkovModel, Row};

pub const CHAIN_WORDS: [&str; 4] = ["a", "b", "c", "d"];
pub const CHAIN_VOCAB_LEN: usize = FIRST_WORD as usize + CHAIN_WORDS.len();
pub const CHAIN_MAX_LEN: usize = 5;

pub fn chain_vocab() -> Arc<Vocab> {
    Arc::new(Vocab::from_words(CHAIN_WORDS).expect("fixed word list is valid"))
}

pub fn chain_reference() -> MarkovModel {
    let [a, b, c, d] = [FIRST_WORD, FIRST_WORD + 1, FIRST_WORD + 2, FIRST_WORD + 3];
    MarkovModel::bigram(
        CHAIN_VOCAB_LEN,
        CHAIN_MAX_LEN,
        vec![
            (BOS, Row::explicit(vec![(a, 0.5), (b, 0.5)])),
            (a, Row::explicit(vec![(b, 0.5), (c, 0.5)])),
            (b, Row::explicit(vec![(c, 0.5), (d, 0.5)])),
            (c, Row::explicit(vec![(d, 0.5), (EOS, 0.5)])),
            (d, Row::explicit(vec![(EOS, 1.0)])),
        ],
        Row::explicit(vec![(EOS, 1.0)]),
    )
    .expect("chain rows are valid")
}

/// Uniform order-1 chain on the chain's space.
pub fn chain_noise() -> MarkovModel {
    MarkovModel::uniform(1, CHAIN_VOCAB_LEN, CHAIN_MAX_LEN).expect("uniform chain is valid")
}

/// Interpolation weights for the desk λ-ladder, closest to the reference
/// first.
pub const DESK_LAMBDAS: [f64; 5] = [0.05, 0.15, 0.3, 0.5, 0.8];

/// Training fractions of the second desk ladder.
pub const DESK_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Pool size and smoothing of the desk fraction ladder: add-α chains fit to
/// 20..100 reference sentences, whose distance to the reference shrinks
/// steadily with the amount of data.
pub const DESK_POOL_SIZE: usize = 100;
pub const DESK_ALPHA: f64 = 4.0;

/// Samples per side in the desk experiment.
pub const DESK_SAMPLES: usize = 40_000;

/// A classifier sized for the chain's short sentences.
pub fn desk_classifier_config() -> ClassifierConfig {
    ClassifierConfig {
        embed_dim: 16,
        layers: vec![(2, 32), (3, 32)],
        learning_rate: 1e-3,
        batch_size: 64,
        max_epochs: 60,
        patience: 8,
        max_len: CHAIN_MAX_LEN + 1,
        ..ClassifierConfig::default()
    }
}

/// Both desk ladders on the chain reference, at temperature 1.
pub fn desk_experiment_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        name: "desk".into(),
        seed,
        reference: ReferenceSpec::Chain,
        families: vec![
            FamilySpec::LambdaLadder {
                name: "interp".into(),
                lambdas: DESK_LAMBDAS.to_vec(),
                noise: NoiseSpec::Uniform,
            },
            FamilySpec::FractionLadder {
                name: "volume".into(),
                fractions: DESK_FRACTIONS.to_vec(),
                pool_size: DESK_POOL_SIZE,
                alpha: DESK_ALPHA,
                order: None,
            },
        ],
        temperatures: vec![1.0],
        metrics: Metric::ALL.to_vec(),
        samples: SampleSizes {
            real: DESK_SAMPLES,
            generated: DESK_SAMPLES,
            ..SampleSizes::default()
        },
        classifier: desk_classifier_config(),
        baselines: BaselineConfig::default(),
        oracle: OracleConfig::default(),
    }
}

/// A random dense chain: every context of length `order` over
/// `{BOS} ∪ outcomes` gets a Dirichlet(1)-like row (normalised uniforms)
/// with a fraction of entries zeroed out.
pub fn random_markov(order: usize, vocab_len: usize, max_len: usize, sparsity: f64, seed: u64) -> Result<MarkovModel> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(invalid!("sparsity must lie in [0, 1), got {sparsity}"));
    }
    let mut r = rng::derived_rng(seed, "random-markov", &[]);
    let outs: Vec<u32> = outcomes(vocab_len).collect();
    let mut symbols = vec![BOS];
    symbols.extend(outs.iter().copied().filter(|&x| x != EOS));
    let mut contexts: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..order {
        contexts = contexts
            .into_iter()
            .flat_map(|c| {
                symbols.iter().map(move |&s| {
                    let mut c = c.clone();
                    c.push(s);
                    c
                })
            })
            .collect();
    }
    // Drop contexts with a word before a BOS; they can never occur.
    contexts.retain(|c| c.windows(2).all(|w| !(w[0] != BOS && w[1] == BOS)));
    let mut rows = std::collections::BTreeMap::new();
    for ctx in contexts {
        let mut dense = vec![0.0; vocab_len];
        for &id in &outs {
            if r.gen::<f64>() >= sparsity {
                dense[id as usize] = r.gen::<f64>() + 1e-3;
            }
        }
        if dense.iter().all(|&x| x == 0.0) {
            dense[EOS as usize] = 1.0;
        }
        let s: f64 = dense.iter().sum();
        dense.iter_mut().for_each(|x| *x /= s);
        rows.insert(ctx, Row::from_dense(&dense)?);
    }
    MarkovModel::new(order, vocab_len, max_len, rows, Row::uniform(vocab_len))
}
