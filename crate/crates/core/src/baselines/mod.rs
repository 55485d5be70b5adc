//! Comparison metrics: BLEU and self-BLEU, Kneser-Ney LM scores, and the
//! Fréchet embedding distance.

pub mod bleu;
pub mod fed;
pub mod kn;

pub use bleu::{bleu, self_bleu, ReferenceSet, SelfBleu, DEFAULT_MAX_N, DEFAULT_SELF_BLEU_CAP};
pub use fed::{fed, frechet_distance, EmbeddingConfig, EmbeddingModel, GaussianFit, SentenceEncoder};
pub use kn::{kn_score, KnConfig, NgramTable};
