use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Kendall's τ_a between two orderings of the items `0..n`.
///
/// Each ordering lists item indices best first. τ_a is
/// `(concordant − discordant) / (n (n − 1) / 2)` over all item pairs.
pub fn kendall_tau(rank_a: &[usize], rank_b: &[usize]) -> Result<f64> {
    let n = rank_a.len();
    if n < 2 {
        return Err(invalid!("Kendall's tau needs at least two items, got {n}"));
    }
    if rank_b.len() != n {
        return Err(invalid!("rankings have {} and {} items", n, rank_b.len()));
    }
    let pa = positions(rank_a)?;
    let pb = positions(rank_b)?;
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let a = (pa[i] as i64 - pa[j] as i64).signum();
            let b = (pb[i] as i64 - pb[j] as i64).signum();
            score += a * b;
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Inverse permutation; fails unless `order` is a permutation of `0..n`.
fn positions(order: &[usize]) -> Result<Vec<usize>> {
    let mut pos = vec![usize::MAX; order.len()];
    for (p, &item) in order.iter().enumerate() {
        if item >= order.len() || pos[item] != usize::MAX {
            return Err(invalid!("ranking is not a permutation of 0..{}", order.len()));
        }
        pos[item] = p;
    }
    Ok(pos)
}

/// A ranking derived from scores, with ties broken by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRanking {
    /// Item indices, best first.
    pub order: Vec<usize>,
    /// Groups of items (by index) that had identical scores.
    pub tied: Vec<Vec<usize>>,
}

impl ScoreRanking {
    /// Ranks by ascending score, or descending when `higher_is_better`.
    pub fn new(scores: &[f64], higher_is_better: bool) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            let c = scores[a].total_cmp(&scores[b]);
            if higher_is_better {
                c.reverse()
            } else {
                c
            }
        });
        let mut tied: Vec<Vec<usize>> = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || scores[order[k]] != scores[order[start]] {
                if k - start > 1 {
                    let mut g = order[start..k].to_vec();
                    g.sort_unstable();
                    tied.push(g);
                }
                start = k;
            }
        }
        ScoreRanking { order, tied }
    }

    pub fn has_ties(&self) -> bool {
        !self.tied.is_empty()
    }

    /// Every item shares one score.
    pub fn all_tied(&self) -> bool {
        self.tied.len() == 1 && self.tied[0].len() == self.order.len()
    }
}
