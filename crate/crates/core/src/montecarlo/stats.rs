//! Robust summaries for heavy-tailed samples.

use serde::{Deserialize, Serialize};

/// Median-of-means summary of a sample split into consecutive blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianOfMeans {
    pub median: f64,
    pub low: f64,
    pub high: f64,
    pub block_means: Vec<f64>,
}

/// Ranks `(l, u)` (1-based) of the order statistics that bracket the median of
/// `k` i.i.d. values with coverage at least `confidence`. Falls back to the
/// extremes when `k` is too small to reach the requested coverage.
pub fn median_rank_interval(k: usize, confidence: f64) -> (usize, usize) {
    let alpha_half = (1.0 - confidence) / 2.0;
    // P(Bin(k, 1/2) <= j), accumulated in log space to stay finite for large k.
    let ln_half_k = -(k as f64) * std::f64::consts::LN_2;
    let mut ln_binom = 0.0f64;
    let mut cdf = 0.0f64;
    let mut best = 0usize;
    for j in 0..k {
        if j > 0 {
            ln_binom += ((k - j + 1) as f64).ln() - (j as f64).ln();
        }
        cdf += (ln_binom + ln_half_k).exp();
        // Interval [Y_(j+1), Y_(k-j)] misses the median with probability 2 * P(Bin <= j).
        if cdf <= alpha_half {
            best = j + 1;
        } else {
            break;
        }
    }
    if best == 0 {
        (1, k)
    } else {
        (best, k + 1 - best)
    }
}

/// Splits `values` into `blocks` nearly equal consecutive blocks (earlier
/// blocks get the extra element) and summarizes the block means.
pub fn median_of_means(values: &[f64], blocks: usize, confidence: f64) -> MedianOfMeans {
    assert!(blocks >= 1 && values.len() >= blocks);
    let n = values.len();
    let mut block_means = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = n / blocks + usize::from(b < n % blocks);
        let slice = &values[start..start + len];
        block_means.push(slice.iter().sum::<f64>() / len as f64);
        start += len;
    }
    let mut sorted = block_means.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if blocks % 2 == 1 {
        sorted[blocks / 2]
    } else {
        0.5 * (sorted[blocks / 2 - 1] + sorted[blocks / 2])
    };
    let (l, u) = median_rank_interval(blocks, confidence);
    MedianOfMeans {
        median,
        low: sorted[l - 1],
        high: sorted[u - 1],
        block_means,
    }
}

/// Hill estimate of the tail index `α` (with `P(X > x) ~ x^{-α}`) from the `k`
/// largest values of a sample sorted in descending order.
pub fn hill_estimate(sorted_desc: &[f64], k: usize) -> Option<f64> {
    if k < 2 || k >= sorted_desc.len() {
        return None;
    }
    let threshold = sorted_desc[k];
    if threshold <= 0.0 {
        return None;
    }
    let sum_log: f64 = sorted_desc[..k].iter().map(|&x| (x / threshold).ln()).sum();
    if sum_log <= 0.0 {
        return None;
    }
    Some(k as f64 / sum_log)
}
