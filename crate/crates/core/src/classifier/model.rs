use std::ops::Range;

use rand::Rng as _;

use super::{ClassifierConfig, ConvSpec};
use crate::corpus::{TokenSequence, BOS, PAD};
use crate::error::{data_err, invalid, Result};
use crate::rng::{self, Rng};

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs in the loss.
pub const PROB_EPS: f64 = 1e-7;

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvLayout {
    spec: ConvSpec,
    weights: Range<usize>,
    bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embedding: Range<usize>,
    convs: Vec<ConvLayout>,
    out_weights: Range<usize>,
    out_bias: usize,
    features: usize,
    total: usize,
}

impl Layout {
    fn new(vocab_len: usize, embed_dim: usize, convs: &[ConvSpec]) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let embedding = take(vocab_len * embed_dim);
        let convs: Vec<ConvLayout> = convs
            .iter()
            .map(|&spec| ConvLayout {
                spec,
                weights: take(spec.kernels * spec.window * embed_dim),
                bias: take(spec.kernels),
            })
            .collect();
        let features = convs.iter().map(|c| c.spec.kernels).sum();
        let out_weights = take(features);
        let out_bias = take(1).start;
        Layout {
            embedding,
            convs,
            out_weights,
            out_bias,
            features,
            total: at,
        }
    }
}

/// Parameters and fixed topology of the discriminator.
///
/// All parameters live in one flat vector; [`ClassifierModel::param_groups`]
/// names the slices. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    vocab_len: usize,
    embed_dim: usize,
    max_len: usize,
    convs: Vec<ConvSpec>,
    layout: Layout,
    params: Vec<f64>,
    init_seed: u64,
}

impl ClassifierModel {
    /// A model with every parameter zero.
    pub fn zeros(vocab_len: usize, embed_dim: usize, convs: &[ConvSpec], max_len: usize) -> Result<Self> {
        if vocab_len == 0 || embed_dim == 0 || convs.is_empty() || max_len == 0 {
            return Err(invalid!("classifier dimensions must be positive"));
        }
        if convs.iter().any(|c| c.window == 0 || c.kernels == 0) {
            return Err(invalid!("convolution layers need window and kernels >= 1"));
        }
        let layout = Layout::new(vocab_len, embed_dim, convs);
        Ok(ClassifierModel {
            vocab_len,
            embed_dim,
            max_len,
            convs: convs.to_vec(),
            params: vec![0.0; layout.total],
            layout,
            init_seed: 0,
        })
    }

    /// Random initialization: embeddings `U(−0.1, 0.1)`, convolution and
    /// output weights `U(−1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(config: &ClassifierConfig, vocab_len: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut m = Self::zeros(vocab_len, config.embed_dim, &config.conv_specs(), config.max_len)?;
        m.init_seed = seed;
        let mut rng = rng::rng_from_seed(seed);
        let mut fill = |params: &mut [f64], range: Range<usize>, bound: f64| {
            for p in &mut params[range] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        let layout = m.layout.clone();
        fill(&mut m.params, layout.embedding.clone(), 0.1);
        for c in &layout.convs {
            let fan_in = (c.spec.window * m.embed_dim) as f64;
            fill(&mut m.params, c.weights.clone(), 1.0 / fan_in.sqrt());
        }
        fill(
            &mut m.params,
            layout.out_weights.clone(),
            1.0 / (layout.features as f64).sqrt(),
        );
        Ok(m)
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn convs(&self) -> &[ConvSpec] {
        &self.convs
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub(crate) fn set_init_seed(&mut self, seed: u64) {
        self.init_seed = seed;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn num_features(&self) -> usize {
        self.layout.features
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = vec![ParamGroup {
            name: "embedding".into(),
            range: self.layout.embedding.clone(),
        }];
        for (i, c) in self.layout.convs.iter().enumerate() {
            groups.push(ParamGroup {
                name: format!("conv{i}.weight"),
                range: c.weights.clone(),
            });
            groups.push(ParamGroup {
                name: format!("conv{i}.bias"),
                range: c.bias.clone(),
            });
        }
        groups.push(ParamGroup {
            name: "out.weight".into(),
            range: self.layout.out_weights.clone(),
        });
        groups.push(ParamGroup {
            name: "out.bias".into(),
            range: self.layout.out_bias..self.layout.out_bias + 1,
        });
        groups
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn embedding(&self, id: u32) -> &[f64] {
        let d = self.embed_dim;
        let start = self.layout.embedding.start + id as usize * d;
        &self.params[start..start + d]
    }

    /// Forward pass for one input row (BOS already prepended).
    fn forward_one(&self, ids: &[u32], dropout: Option<(f64, &mut Rng)>) -> Cache {
        let d = self.embed_dim;
        let n = ids.len();
        let mut features = Vec::with_capacity(self.layout.features);
        let mut argmax = Vec::with_capacity(self.layout.features);
        for conv in &self.layout.convs {
            let w = conv.spec.window;
            let positions = n.saturating_sub(w) + 1;
            let weights = &self.params[conv.weights.clone()];
            let bias = &self.params[conv.bias.clone()];
            for k in 0..conv.spec.kernels {
                let kernel = &weights[k * w * d..(k + 1) * w * d];
                let mut best = f64::NEG_INFINITY;
                let mut best_t = 0;
                for t in 0..positions {
                    let mut s = bias[k];
                    for j in 0..w.min(n - t) {
                        let e = self.embedding(ids[t + j]);
                        s += kernel[j * d..(j + 1) * d]
                            .iter()
                            .zip(e)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    if s > best {
                        best = s;
                        best_t = t;
                    }
                }
                features.push(best);
                argmax.push(best_t);
            }
        }
        let scale = match dropout {
            Some((p, rng)) if p > 0.0 => {
                let keep = 1.0 - p;
                (0..features.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            }
            _ => vec![1.0; features.len()],
        };
        let out_w = &self.params[self.layout.out_weights.clone()];
        let logit = self.params[self.layout.out_bias]
            + features
                .iter()
                .zip(&scale)
                .zip(out_w)
                .map(|((f, s), w)| f * s * w)
                .sum::<f64>();
        Cache {
            features,
            argmax,
            scale,
            z: sigmoid(logit),
        }
    }

    /// `z` for every example of the batch, dropout off.
    pub fn forward(&self, batch: &LabeledBatch) -> Result<Vec<f64>> {
        batch.check(self)?;
        Ok((0..batch.len())
            .map(|i| self.forward_one(batch.row(i), None).z)
            .collect())
    }

    /// `z` for a single sequence, dropout off.
    pub fn predict(&self, seq: &TokenSequence) -> Result<f64> {
        let input = self.input_row(seq)?;
        Ok(self.forward_one(&input, None).z)
    }

    pub(crate) fn input_row(&self, seq: &TokenSequence) -> Result<Vec<u32>> {
        if seq.len() > self.max_len {
            return Err(data_err!(
                "sequence of length {} exceeds the classifier's limit of {}",
                seq.len(),
                self.max_len
            ));
        }
        if let Some(&bad) = seq.ids().iter().find(|&&id| id as usize >= self.vocab_len) {
            return Err(data_err!("token id {bad} outside the classifier vocabulary"));
        }
        let mut row = Vec::with_capacity(seq.len() + 1);
        row.push(BOS);
        row.extend_from_slice(seq.ids());
        Ok(row)
    }
}

struct Cache {
    features: Vec<f64>,
    argmax: Vec<usize>,
    scale: Vec<f64>,
    z: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Padded id matrix with per-row lengths and labels (`true` = real).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    ids: Vec<u32>,
    width: usize,
    lengths: Vec<usize>,
    labels: Vec<bool>,
}

impl LabeledBatch {
    /// Builds a batch, prepending BOS to every sequence and padding to the
    /// longest row.
    pub fn new(model: &ClassifierModel, seqs: &[&TokenSequence], labels: &[bool]) -> Result<Self> {
        if seqs.len() != labels.len() {
            return Err(invalid!("{} sequences but {} labels", seqs.len(), labels.len()));
        }
        let rows = seqs.iter().map(|s| model.input_row(s)).collect::<Result<Vec<_>>>()?;
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = vec![PAD; width * rows.len()];
        for (i, r) in rows.iter().enumerate() {
            ids[i * width..i * width + r.len()].copy_from_slice(r);
        }
        Ok(LabeledBatch {
            ids,
            width,
            lengths: rows.iter().map(Vec::len).collect(),
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Row `i` without padding.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.width..i * self.width + self.lengths[i]]
    }

    fn check(&self, model: &ClassifierModel) -> Result<()> {
        for i in 0..self.len() {
            let row = self.row(i);
            if row.len() > model.max_len + 1 {
                return Err(data_err!("batch row {i} is longer than the classifier limit"));
            }
            if row.iter().any(|&id| id as usize >= model.vocab_len) {
                return Err(data_err!("batch row {i} has an id outside the vocabulary"));
            }
        }
        Ok(())
    }
}

/// Whether dropout is active.
pub enum ForwardMode<'a> {
    Eval,
    /// Inverted dropout with rate `dropout`, masks drawn from `rng`.
    Train {
        rng: &'a mut Rng,
        dropout: f64,
    },
}

/// Mean binary cross-entropy `−mean[y·ln z + (1 − y)·ln(1 − z)]` and its
/// exact gradient with respect to every parameter.
///
/// `z` is clamped to `[ε, 1 − ε]` inside the logarithms only; the gradient is
/// that of the unclamped loss, `∂loss/∂logit = (z − y) / n`.
pub fn loss_and_grads(model: &ClassifierModel, batch: &LabeledBatch, mode: ForwardMode<'_>) -> Result<(f64, Vec<f64>)> {
    batch.check(model)?;
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    let n = batch.len() as f64;
    let d = model.embed_dim;
    let layout = &model.layout;
    let mut grads = vec![0.0; layout.total];
    let mut loss = 0.0;
    let (dropout_p, mut rng) = match mode {
        ForwardMode::Eval => (0.0, None),
        ForwardMode::Train { rng, dropout } => (dropout, Some(rng)),
    };
    let out_w = &model.params[layout.out_weights.clone()];
    for i in 0..batch.len() {
        let row = batch.row(i);
        let cache = match rng.as_deref_mut() {
            Some(r) => model.forward_one(row, Some((dropout_p, r))),
            None => model.forward_one(row, None),
        };
        let y = if batch.labels[i] { 1.0 } else { 0.0 };
        let zc = cache.z.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= y * zc.ln() + (1.0 - y) * (1.0 - zc).ln();

        let dlogit = (cache.z - y) / n;
        grads[layout.out_bias] += dlogit;
        let mut f = 0;
        for conv in &layout.convs {
            let w = conv.spec.window;
            let weights = &model.params[conv.weights.clone()];
            for k in 0..conv.spec.kernels {
                let scaled = cache.features[f] * cache.scale[f];
                grads[layout.out_weights.start + f] += dlogit * scaled;
                let dfeat = dlogit * out_w[f] * cache.scale[f];
                if dfeat != 0.0 {
                    let t = cache.argmax[f];
                    grads[conv.bias.start + k] += dfeat;
                    let kbase = k * w * d;
                    for j in 0..w.min(row.len() - t) {
                        let id = row[t + j] as usize;
                        let e_start = layout.embedding.start + id * d;
                        let w_start = conv.weights.start + kbase + j * d;
                        for c in 0..d {
                            grads[w_start + c] += dfeat * model.params[e_start + c];
                            grads[e_start + c] += dfeat * weights[kbase + j * d + c];
                        }
                    }
                }
                f += 1;
            }
        }
    }
    Ok((loss / n, grads))
}
