//! Distributional discrepancy (DD) estimation for unconditional text
//! generators.
//!
//! DD is the total variation distance between the real sentence distribution
//! and a generator's distribution. It cannot be computed directly when the
//! real distribution is unknown, so it is estimated from the held-out accuracy
//! `a` of a binary classifier trained to separate real from generated
//! sentences: `dd_hat = 2a - 1`.
//!
//! The crate is organised around the pipeline:
//!
//! | Module | Role |
//! |--------|------|
//! | [`corpus`] | tokenization, vocabularies, integer encoding, splits |
//! | [`synthetic`] | Markov generators with exact sequence probabilities |
//! | [`oracle`] | exact and Monte-Carlo total variation, gold rankings |
//! | [`classifier`] | the convolutional real-vs-generated classifier |
//! | [`baselines`] | BLEU / self-BLEU, Kneser-Ney LM scores, Fréchet distance |
//! | [`harness`] | experiments, temperature sweeps, Kendall's tau, reports |
//!
//! ```
//! use ddeval_core::classifier::dd_from_accuracy;
//!
//! let score = dd_from_accuracy(0.75).unwrap();
//! assert_eq!(score.value, 0.5);
//! ```

pub mod baselines;
pub mod classifier;
pub mod corpus;
mod error;
pub mod fixtures;
pub mod harness;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};

pub use classifier::{ClassifierConfig, ClassifierModel, DdReport};
pub use corpus::{Corpus, CorpusLabel, SplitSpec, TokenSequence, Vocab};
pub use harness::{ExperimentConfig, Metric, RankReport};
pub use oracle::{DdMethod, DdScore, SequenceSpace};
pub use synthetic::{GeneratorSpec, MarkovModel, SequenceDistribution};
