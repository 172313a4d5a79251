use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::rank::average_ranks;
use super::{check_finite, Method, StatsError, TestResult};

/// Largest number of non-zero pairs that gets the exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

const MIN_PAIRS: usize = 5;

/// Direction of the alternative hypothesis, phrased in terms of `a` vs `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `a` tends to be smaller than `b`.
    Less,
    /// `a` tends to be larger than `b`.
    Greater,
}

/// Two-sided paired signed-rank test.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(a, b, Alternative::TwoSided)
}

/// Paired signed-rank test on `d = a - b`.
///
/// Zero differences are dropped before ranking. The reported statistic is
/// `min(W+, W-)`, the effect size the matched-pairs rank-biserial
/// correlation `(W+ - W-) / (W+ + W-)`.
pub fn wilcoxon_signed_rank_with(a: &[f64], b: &[f64], alt: Alternative) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::Degenerate);
    }
    let n = d.len();
    if n < MIN_PAIRS {
        return Err(StatsError::TooFew { what: "non-zero paired differences", needed: MIN_PAIRS, got: n });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).fold(0.0, |acc, (r, _)| acc + r);
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let nf = n as f64;
    let mean = total / 2.0;
    let tie_adj: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
    let sd = var.sqrt();
    let z = if sd > 0.0 { (w_plus - mean) / sd } else { 0.0 };

    let (method, p) = if n <= WILCOXON_EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let obs = (2.0 * w_plus).round() as usize;
        let dist = null_distribution(&doubled);
        let lower: f64 = dist[..=obs].iter().sum();
        let upper: f64 = dist[obs..].iter().sum();
        let p = match alt {
            Alternative::TwoSided => 2.0 * lower.min(upper),
            Alternative::Less => lower,
            Alternative::Greater => upper,
        };
        (Method::WilcoxonExact, p)
    } else {
        let std_normal = Normal::standard();
        let p = match alt {
            Alternative::TwoSided => {
                let zc = (((w_plus - mean).abs() - 0.5) / sd).max(0.0);
                2.0 * std_normal.sf(zc)
            }
            Alternative::Less => std_normal.cdf((w_plus - mean + 0.5) / sd),
            Alternative::Greater => std_normal.sf((w_plus - mean - 0.5) / sd),
        };
        (Method::WilcoxonNormal, p)
    };

    Ok(TestResult {
        method,
        statistic: w_plus.min(w_minus),
        p_value: p.clamp(0.0, 1.0),
        effect_size: Some((w_plus - w_minus) / total),
        z: Some(z),
        n,
    })
}

/// Probability of each value of `2 W+` under random signs.
fn null_distribution(doubled_ranks: &[usize]) -> Vec<f64> {
    let max: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled_ranks {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    let scale = 0.5f64.powi(doubled_ranks.len() as i32);
    counts.iter_mut().for_each(|c| *c *= scale);
    counts
}
