use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size (pairs, or n1 + n2) that uses the exact null.
pub const EXACT_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    SignedRank,
    RankSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    /// W+ for signed-rank, rank sum of the first sample for rank-sum.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    pub n: usize,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
}

/// Twice the mid-ranks (integers) and the tie-group sizes.
fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

fn two_sided(le: f64, ge: f64) -> f64 {
    (2.0 * le.min(ge)).min(1.0)
}

fn normal_two_sided(dev: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((dev.abs() - 0.5).max(0.0)) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * std.sf(z)).min(1.0)
}

/// Exact two-sided p of a doubled W+ statistic given doubled ranks.
pub fn signed_rank_exact_p(doubled: &[u64], w2: u64) -> f64 {
    let n = doubled.len();
    let total = 1u64 << n;
    let (mut le, mut ge) = (0u64, 0u64);
    for pattern in 0..total {
        let s: u64 = (0..n).filter(|&k| pattern >> k & 1 == 1).map(|k| doubled[k]).sum();
        le += u64::from(s <= w2);
        ge += u64::from(s >= w2);
    }
    two_sided(le as f64 / total as f64, ge as f64 / total as f64)
}

/// Normal approximation with tie and continuity corrections.
pub fn signed_rank_normal_p(n: usize, w: f64, ties: &[u64]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
    normal_two_sided(w - mean, var)
}

/// Paired test on `x - y`. Zero differences are dropped.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("paired samples must have equal length"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite difference"));
    }
    let d: Vec<f64> = d.into_iter().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::invalid("degenerate pairs: all differences are zero"));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let w2: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let w = w2 as f64 / 2.0;
    let exact = n <= EXACT_MAX_N;
    let p_value = if exact { signed_rank_exact_p(&ranks, w2) } else { signed_rank_normal_p(n, w, &ties) };
    Ok(TestResult { method: TestMethod::SignedRank, statistic: w, p_value, exact, n, n1: None, n2: None })
}

/// Exact two-sided p of the doubled rank sum of a size-`n1` group.
pub fn rank_sum_exact_p(doubled: &[u64], n1: usize, w2: u64) -> f64 {
    let n = doubled.len();
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for subset in 0u64..(1u64 << n) {
        if subset.count_ones() as usize != n1 {
            continue;
        }
        let s: u64 = (0..n).filter(|&k| subset >> k & 1 == 1).map(|k| doubled[k]).sum();
        total += 1;
        le += u64::from(s <= w2);
        ge += u64::from(s >= w2);
    }
    two_sided(le as f64 / total as f64, ge as f64 / total as f64)
}

pub fn rank_sum_normal_p(n1: usize, n2: usize, w: f64, ties: &[u64]) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let mean = a * (n + 1.0) / 2.0;
    let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = a * b / 12.0 * ((n + 1.0) - tie / (n * (n - 1.0)));
    normal_two_sided(w - mean, var)
}

/// Two-sample rank-sum test; the statistic is the rank sum of `a`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("rank-sum needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample value"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let w2: u64 = ranks[..a.len()].iter().sum();
    let n = pooled.len();
    let w = w2 as f64 / 2.0;
    let exact = n <= EXACT_MAX_N;
    let p_value =
        if exact { rank_sum_exact_p(&ranks, a.len(), w2) } else { rank_sum_normal_p(a.len(), b.len(), w, &ties) };
    Ok(TestResult {
        method: TestMethod::RankSum,
        statistic: w,
        p_value,
        exact,
        n,
        n1: Some(a.len()),
        n2: Some(b.len()),
    })
}
