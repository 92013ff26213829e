//! Run-to-run comparisons: the Mann-Whitney U test, the Vargha-Delaney
//! effect size and the joint significance rule combining the two.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two values per sample, got {0} and {1}")]
    TooFewSamples(usize, usize),
    #[error("empty sample")]
    EmptySample,
}

pub const ALPHA: f64 = 0.05;
pub const A12_UPPER: f64 = 0.56;
pub const A12_LOWER: f64 = 0.44;

/// Largest `|a| * |b|` for which the null distribution is enumerated exactly.
pub const EXACT_LIMIT: usize = 100;

/// Which way a significant difference points; `Better` means values from
/// the first sample tend to be larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Better,
    Worse,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub p_value: f64,
    pub a12: f64,
    pub significant: bool,
    pub direction: Direction,
}

/// Midranks (1-based) of the pooled sample, plus the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && pooled[order[e + 1]] == pooled[order[k]] {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        for &i in &order[k..=e] {
            ranks[i] = r;
        }
        ties.push(e - k + 1);
        k = e + 1;
    }
    (ranks, ties)
}

/// Two-sided p-value of the rank-sum test. Small designs enumerate the
/// permutation distribution of the midrank sum; larger ones use the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples(a.len(), b.len()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    if a.len() * b.len() <= EXACT_LIMIT {
        return Ok(exact_p(&ranks, a.len(), r1));
    }
    let n = n1 + n2;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Fraction of size-`k` subsets of `ranks` whose sum is at least as far
/// from the null mean as `observed`. Ranks are doubled so midranks are
/// integers, then subset sums are counted by dynamic programming.
fn exact_p(ranks: &[f64], k: usize, observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with doubled sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; k + 1];
    counts[0][0] = 1.0;
    for &d in &doubled {
        for j in (1..=k).rev() {
            for s in (d..=max_sum).rev() {
                let add = counts[j - 1][s - d];
                if add > 0.0 {
                    counts[j][s] += add;
                }
            }
        }
    }
    let total: f64 = counts[k].iter().sum();
    let centre = max_sum as f64 * k as f64 / ranks.len() as f64;
    let dev = (2.0 * observed - centre).abs() - 1e-9;
    let extreme: f64 = counts[k]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as f64 - centre).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / total).min(1.0)
}

/// Probability that a value drawn from `a` exceeds one drawn from `b`, ties
/// counted as half.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut wins = 0.0;
    for x in a {
        for y in b {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (a.len() * b.len()) as f64)
}

/// The joint rule: significant only when `p < 0.05` and the effect size is
/// outside `(0.44, 0.56)`.
pub fn judge(p_value: f64, a12: f64) -> ComparisonResult {
    let direction = if a12 >= A12_UPPER {
        Direction::Better
    } else if a12 <= A12_LOWER {
        Direction::Worse
    } else {
        Direction::None
    };
    ComparisonResult {
        p_value,
        a12,
        significant: p_value < ALPHA && direction != Direction::None,
        direction,
    }
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<ComparisonResult, StatsError> {
    let p = mann_whitney_u(a, b)?;
    let a12 = vargha_delaney_a12(a, b)?;
    Ok(judge(p, a12))
}
