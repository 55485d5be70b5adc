//! Ground-truth distributional discrepancy.
//!
//! DD between two sequence distributions `p` and `q` is their total variation
//! distance `½ Σ_x |p(x) − q(x)|`. Splitting the sum by which density
//! dominates rewrites it as four indicator expectations of the Bayes-optimal
//! discriminator output `z(x) = p(x) / (p(x) + q(x))`:
//!
//! ```text
//! ½ [ P_p(z ≥ ½) + P_q(z < ½) − P_q(z ≥ ½) − P_p(z < ½) ]
//! ```
//!
//! [`tv_exact`] evaluates the first form by enumerating every complete
//! outcome, [`indicator_terms_exact`] evaluates the second form exactly on the
//! same enumeration, and [`tv_mc`] estimates the second form by sampling.
//!
//! Ties `p(x) == q(x)` fall on the `z ≥ ½` side; their contributions cancel.
//! Sequences cut off at the length cap are distinct outcomes, one per
//! distinct cut prefix, matching what the generators actually emit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EOS;
#[cfg(test)]
use crate::error::Error;
use crate::error::{data_err, invalid, Result};
use crate::rng;
use crate::stats::CompensatedSum;
use crate::synthetic::{outcome_count, outcomes, GeneratorSpec, SequenceDistribution};

/// Default cap on `(V + 1)^L_max` for exact enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Default Monte-Carlo sample count per side.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

const MC_CHUNK: usize = 8_192;

/// The sample space shared by two distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpace {
    pub vocab_len: usize,
    pub max_len: usize,
    pub budget: u64,
}

impl SequenceSpace {
    pub fn new(vocab_len: usize, max_len: usize) -> Self {
        SequenceSpace {
            vocab_len,
            max_len,
            budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// Space of a pair of distributions; both must agree on ids and cap.
    pub fn for_pair<P, Q>(p: &P, q: &Q) -> Result<Self>
    where
        P: SequenceDistribution + ?Sized,
        Q: SequenceDistribution + ?Sized,
    {
        if p.vocab_len() != q.vocab_len() || p.max_len() != q.max_len() {
            return Err(data_err!(
                "distributions live on different spaces: ({}, {}) vs ({}, {})",
                p.vocab_len(),
                p.max_len(),
                q.vocab_len(),
                q.max_len()
            ));
        }
        Ok(Self::new(p.vocab_len(), p.max_len()))
    }

    /// `(V + 1)^L_max`, saturating; `V + 1` counts UNK, words and EOS.
    pub fn size_bound(&self) -> u64 {
        let base = outcome_count(self.vocab_len) as u64;
        let mut acc: u64 = 1;
        for _ in 0..self.max_len {
            acc = acc.saturating_mul(base);
        }
        acc
    }

    pub fn is_enumerable(&self) -> bool {
        self.size_bound() <= self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DdMethod {
    Enumerated,
    MonteCarlo { samples: usize, std_err: f64 },
    ClassifierEstimate,
}

/// A DD value in `[0, 1]` with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdScore {
    pub value: f64,
    pub method: DdMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Unclamped estimate, when it differs from `value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
}

impl DdScore {
    pub(crate) fn new(raw: f64, method: DdMethod, seed: Option<u64>) -> Self {
        let value = raw.clamp(0.0, 1.0);
        DdScore {
            value,
            method,
            seed,
            raw: (value != raw).then_some(raw),
        }
    }

    pub fn std_err(&self) -> Option<f64> {
        match self.method {
            DdMethod::MonteCarlo { std_err, .. } => Some(std_err),
            _ => None,
        }
    }
}

/// Visits every complete outcome with positive probability under `p` or `q`,
/// passing `(p(x), q(x))`.
pub fn for_each_outcome<P, Q, F>(p: &P, q: &Q, space: &SequenceSpace, mut visit: F) -> Result<()>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
    F: FnMut(&[u32], f64, f64),
{
    let check = SequenceSpace::for_pair(p, q)?;
    if check.vocab_len != space.vocab_len || check.max_len != space.max_len {
        return Err(data_err!("distributions do not live on the given space"));
    }
    if !space.is_enumerable() {
        return Err(invalid!(
            "space of up to {} outcomes exceeds the enumeration budget of {}; use tv_mc",
            space.size_bound(),
            space.budget
        ));
    }
    let mut prefix = Vec::with_capacity(space.max_len);
    walk(p, q, space, &mut prefix, 1.0, 1.0, &mut visit)
}

fn walk<P, Q, F>(
    p: &P,
    q: &Q,
    space: &SequenceSpace,
    prefix: &mut Vec<u32>,
    pp: f64,
    pq: f64,
    visit: &mut F,
) -> Result<()>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
    F: FnMut(&[u32], f64, f64),
{
    let v = space.vocab_len;
    let rp = p.conditional(prefix)?;
    let rq = q.conditional(prefix)?;
    for id in outcomes(v) {
        let a = if pp > 0.0 { pp * rp.prob(id, v) } else { 0.0 };
        let b = if pq > 0.0 { pq * rq.prob(id, v) } else { 0.0 };
        if a == 0.0 && b == 0.0 {
            continue;
        }
        prefix.push(id);
        if id == EOS || prefix.len() == space.max_len {
            visit(prefix, a, b);
        } else {
            walk(p, q, space, prefix, a, b, visit)?;
        }
        prefix.pop();
    }
    Ok(())
}

/// Exact total variation `½ Σ_x |p(x) − q(x)|` by enumeration.
pub fn tv_exact<P, Q>(p: &P, q: &Q, space: &SequenceSpace) -> Result<DdScore>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
{
    let mut sum = CompensatedSum::new();
    for_each_outcome(p, q, space, |_, a, b| sum.add((a - b).abs()))?;
    Ok(DdScore::new(0.5 * sum.value(), DdMethod::Enumerated, None))
}

/// The four indicator expectations of the optimal discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTerms {
    /// `P_{x~p}(z ≥ ½)`
    pub p_positive: f64,
    /// `P_{x~p}(z < ½)`
    pub p_negative: f64,
    /// `P_{x~q}(z ≥ ½)`
    pub q_positive: f64,
    /// `P_{x~q}(z < ½)`
    pub q_negative: f64,
}

impl IndicatorTerms {
    pub fn discrepancy(&self) -> f64 {
        0.5 * (self.p_positive + self.q_negative - self.q_positive - self.p_negative)
    }
}

/// Evaluates the indicator expectations exactly by probability-weighted
/// enumeration (no sampling).
pub fn indicator_terms_exact<P, Q>(p: &P, q: &Q, space: &SequenceSpace) -> Result<IndicatorTerms>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
{
    let (mut pp, mut pn, mut qp, mut qn) = (
        CompensatedSum::new(),
        CompensatedSum::new(),
        CompensatedSum::new(),
        CompensatedSum::new(),
    );
    for_each_outcome(p, q, space, |_, a, b| {
        if a >= b {
            pp.add(a);
            qp.add(b);
        } else {
            pn.add(a);
            qn.add(b);
        }
    })?;
    Ok(IndicatorTerms {
        p_positive: pp.value(),
        p_negative: pn.value(),
        q_positive: qp.value(),
        q_negative: qn.value(),
    })
}

/// Monte-Carlo estimate of DD from `n` samples per side, scored with exact
/// log densities.
///
/// With `A = P̂_p(z ≥ ½)` and `B = P̂_q(z < ½)` the estimate is `A + B − 1`
/// and its standard error `sqrt(A(1−A)/n + B(1−B)/n)`. Samples are drawn in
/// fixed-size chunks, each from its own seeded stream, so the result does not
/// depend on the thread count.
pub fn tv_mc<P, Q>(p: &P, q: &Q, n: usize, seed: u64) -> Result<DdScore>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
{
    if n < 1000 {
        return Err(invalid!("Monte-Carlo DD needs at least 1000 samples per side, got {n}"));
    }
    SequenceSpace::for_pair(p, q)?;
    let positive_under = |from_p: bool| -> Result<usize> {
        let chunks = n.div_ceil(MC_CHUNK);
        let counts: Vec<Result<usize>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = MC_CHUNK.min(n - c * MC_CHUNK);
                let mut rng = rng::derived_rng(seed, if from_p { "mc-p" } else { "mc-q" }, &[c as u64]);
                let mut hits = 0;
                for _ in 0..len {
                    let x = if from_p {
                        p.sample_one(&mut rng)?
                    } else {
                        q.sample_one(&mut rng)?
                    };
                    let lp = p.logprob(&x)?;
                    let lq = q.logprob(&x)?;
                    // z >= 1/2  <=>  p(x) >= q(x)
                    if lp >= lq {
                        hits += 1;
                    }
                }
                Ok(hits)
            })
            .collect();
        counts.into_iter().sum()
    };
    let a = positive_under(true)? as f64 / n as f64;
    let b = 1.0 - positive_under(false)? as f64 / n as f64;
    let std_err = (a * (1.0 - a) / n as f64 + b * (1.0 - b) / n as f64).sqrt();
    Ok(DdScore::new(
        a + b - 1.0,
        DdMethod::MonteCarlo { samples: n, std_err },
        Some(seed),
    ))
}

/// DD between two distributions: exact when the space is enumerable under
/// `budget`, Monte-Carlo otherwise.
pub fn discrepancy<P, Q>(p: &P, q: &Q, budget: u64, mc_samples: usize, seed: u64) -> Result<DdScore>
where
    P: SequenceDistribution + ?Sized,
    Q: SequenceDistribution + ?Sized,
{
    let space = SequenceSpace::for_pair(p, q)?.with_budget(budget);
    if space.is_enumerable() {
        tv_exact(p, q, &space)
    } else {
        tv_mc(p, q, mc_samples, seed)
    }
}

/// A gold-standard ordering of a generator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRanking {
    /// Family indices, best (lowest DD) first.
    pub order: Vec<usize>,
    /// DD of each family member, by family index.
    pub scores: Vec<DdScore>,
}

/// Ranks generators by their DD to `reference`, ascending. Ties keep family
/// order.
pub fn gold_rank<R>(
    family: &[GeneratorSpec],
    reference: &R,
    budget: u64,
    mc_samples: usize,
    seed: u64,
) -> Result<GoldRanking>
where
    R: SequenceDistribution + ?Sized,
{
    if family.is_empty() {
        return Err(invalid!("cannot rank an empty family"));
    }
    let scores = family
        .iter()
        .enumerate()
        .map(|(i, g)| {
            discrepancy(
                reference,
                g,
                budget,
                mc_samples,
                rng::derive_seed(seed, "gold", &[i as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GoldRanking {
        order: order_by(&scores.iter().map(|s| s.value).collect::<Vec<_>>()),
        scores,
    })
}

/// Indices sorted by ascending value; equal values keep index order.
pub(crate) fn order_by(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}
