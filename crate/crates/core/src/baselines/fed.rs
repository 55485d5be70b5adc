//! Fréchet distance between Gaussians fit to sentence embeddings.
//!
//! The sentence encoder is a stand-in: each token id gets a fixed random
//! vector drawn from a seeded generator and a sentence is the mean of its
//! token vectors. Anything implementing [`SentenceEncoder`] can replace it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSequence, EOS};
use crate::error::{data_err, invalid, Error, Result};
use crate::rng;

pub const DEFAULT_EMBED_DIM: usize = 128;
/// Ridge added to every fitted covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
/// Eigenvalues of a fitted covariance (before the ridge) below this are
/// treated as a numeric failure.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = -1e-10;

pub trait SentenceEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, seq: &TokenSequence) -> DVector<f64>;
}

/// Mean of seeded random token vectors with entries uniform in [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    seed: u64,
    vocab_len: usize,
    table: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: DEFAULT_EMBED_DIM,
            seed: 0,
        }
    }
}

impl EmbeddingModel {
    pub fn new(vocab_len: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("embedding dimension must be positive"));
        }
        let mut r = rng::derived_rng(seed, "fed-embedding", &[]);
        let table = (0..vocab_len * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        Ok(EmbeddingModel {
            dim,
            seed,
            vocab_len,
            table,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    fn row(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.table[i..i + self.dim]
    }
}

impl SentenceEncoder for EmbeddingModel {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Averages over the words; a sentence without words maps to the EOS vector.
    fn encode(&self, seq: &TokenSequence) -> DVector<f64> {
        let words = seq.words();
        let ids: &[u32] = if words.is_empty() { &[EOS] } else { words };
        let mut v = DVector::zeros(self.dim);
        for &id in ids {
            for (acc, x) in v.iter_mut().zip(self.row(id)) {
                *acc += x;
            }
        }
        v / ids.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    /// Unbiased sample covariance plus the ridge.
    pub cov: DMatrix<f64>,
}

impl GaussianFit {
    pub fn fit(points: &[DVector<f64>]) -> Result<Self> {
        if points.len() < 2 {
            return Err(data_err!(
                "a Gaussian fit needs at least two points, got {}",
                points.len()
            ));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(invalid!("points have different dimensions"));
        }
        let n = points.len() as f64;
        let mean = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / n;
        let mut cov = DMatrix::zeros(d, d);
        for p in points {
            let c = p - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n - 1.0;
        cov = (&cov + cov.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < NEGATIVE_EIGEN_TOLERANCE {
            return Err(Error::Numeric(format!("sample covariance has eigenvalue {min_eig:e}")));
        }
        for i in 0..d {
            cov[(i, i)] += COVARIANCE_RIDGE;
        }
        Ok(GaussianFit { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// are clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// `||μa - μb||² + tr(Σa) + tr(Σb) - 2 tr((Σa^½ Σb Σa^½)^½)`, clamped at 0.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid!("Gaussians have dimensions {} and {}", a.dim(), b.dim()));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let sa = sqrt_psd(&a.cov);
    let m = &sa * &b.cov * &sa;
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let cross: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = diff + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::Numeric("Fréchet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

pub fn embed_corpus<E: SentenceEncoder + ?Sized>(corpus: &Corpus, emb: &E) -> Vec<DVector<f64>> {
    corpus.sequences().iter().map(|s| emb.encode(s)).collect()
}

pub fn fed<E: SentenceEncoder + ?Sized>(a: &Corpus, b: &Corpus, emb: &E) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(data_err!("FED needs at least two sentences per corpus"));
    }
    let fa = GaussianFit::fit(&embed_corpus(a, emb))?;
    let fb = GaussianFit::fit(&embed_corpus(b, emb))?;
    frechet_distance(&fa, &fb)
}
