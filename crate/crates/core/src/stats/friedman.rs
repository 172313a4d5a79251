use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::rank::average_ranks;
use super::{Method, StatsError, TestResult};

/// Designs up to this many subjects use the exact permutation distribution.
pub const FRIEDMAN_EXACT_MAX_N: usize = 10;
/// ... provided they have at most this many conditions.
pub const FRIEDMAN_EXACT_MAX_K: usize = 4;

/// Per-subject, per-condition means of one metric (rows = subjects).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeans {
    conditions: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl SubjectMeans {
    /// Fails on ragged rows or NaN cells, naming the first missing cell.
    pub fn new(conditions: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        for (i, row) in rows.iter().enumerate() {
            let missing =
                if row.len() < conditions.len() { Some(row.len()) } else { row.iter().position(|v| v.is_nan()) };
            if let Some(j) = missing.or((row.len() > conditions.len()).then_some(conditions.len())) {
                return Err(StatsError::MissingCell {
                    subject: i.to_string(),
                    condition: conditions.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                });
            }
            super::check_finite(row)?;
        }
        Ok(Self { conditions, rows })
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.conditions.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Friedman rank test with tie correction and Kendall's W.
///
/// Small designs (see [`FRIEDMAN_EXACT_MAX_N`]) get the exact p-value of the
/// within-subject permutation distribution; larger ones the chi-square
/// approximation with `k - 1` degrees of freedom.
pub fn friedman(m: &SubjectMeans) -> Result<TestResult, StatsError> {
    let n = m.n_subjects();
    let k = m.n_conditions();
    if k < 3 {
        return Err(StatsError::UseWilcoxon(k));
    }
    if n < 2 {
        return Err(StatsError::TooFew { what: "subjects", needed: 2, got: n });
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    let mut row_ranks = Vec::with_capacity(n);
    for row in m.rows() {
        let (ranks, ties) = average_ranks(row);
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        tie_term += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
        row_ranks.push(ranks);
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let denom = 1.0 - tie_term / (nf * kf * (kf * kf - 1.0));
    let chi2 = if denom <= 1e-12 {
        0.0
    } else {
        ((12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0)) / denom).max(0.0)
    };
    let w = (chi2 / (nf * (kf - 1.0))).clamp(0.0, 1.0);

    let (method, p) = if denom <= 1e-12 {
        (Method::FriedmanChiSquare, 1.0)
    } else if n <= FRIEDMAN_EXACT_MAX_N && k <= FRIEDMAN_EXACT_MAX_K {
        (Method::FriedmanExact, exact_p(&row_ranks))
    } else {
        let dist = ChiSquared::new(kf - 1.0).expect("k >= 3");
        (Method::FriedmanChiSquare, dist.sf(chi2))
    };
    Ok(TestResult { method, statistic: chi2, p_value: p.clamp(0.0, 1.0), effect_size: Some(w), z: None, n })
}

/// All distinct orderings of `v` (sorted input), lexicographic.
fn distinct_permutations(mut v: Vec<u32>) -> Vec<Vec<u32>> {
    v.sort_unstable();
    let mut out = vec![v.clone()];
    loop {
        let Some(i) = (0..v.len().saturating_sub(1)).rev().find(|&i| v[i] < v[i + 1]) else {
            return out;
        };
        let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("successor exists");
        v.swap(i, j);
        v[i + 1..].reverse();
        out.push(v.clone());
    }
}

/// P(sum of squared rank sums >= observed) when each subject's ranks are
/// permuted uniformly and independently. Ranks are doubled so that tie
/// averages stay integral.
fn exact_p(row_ranks: &[Vec<f64>]) -> f64 {
    let k = row_ranks[0].len();
    debug_assert!(k <= FRIEDMAN_EXACT_MAX_K);
    let doubled: Vec<Vec<u32>> =
        row_ranks.iter().map(|r| r.iter().map(|x| (2.0 * x).round() as u32).collect()).collect();
    let mut observed = [0u64; FRIEDMAN_EXACT_MAX_K];
    for row in &doubled {
        for (o, &r) in observed.iter_mut().zip(row) {
            *o += r as u64;
        }
    }
    let observed_ss: u64 = observed.iter().map(|s| s * s).sum();

    let mut dist: BTreeMap<[u32; FRIEDMAN_EXACT_MAX_K], f64> = BTreeMap::from([([0; FRIEDMAN_EXACT_MAX_K], 1.0)]);
    for row in &doubled {
        let perms = distinct_permutations(row.clone());
        let weight = 1.0 / perms.len() as f64;
        let mut next: BTreeMap<[u32; FRIEDMAN_EXACT_MAX_K], f64> = BTreeMap::new();
        for (sums, prob) in &dist {
            for p in &perms {
                let mut s = *sums;
                for (slot, &r) in s.iter_mut().zip(p) {
                    *slot += r;
                }
                // each row's arrangements are closed under relabelling the
                // conditions, so sum vectors equal up to order are merged
                s[..k].sort_unstable();
                *next.entry(s).or_insert(0.0) += prob * weight;
            }
        }
        dist = next;
    }
    dist.iter()
        .filter(|(s, _)| s.iter().map(|&x| (x as u64) * (x as u64)).sum::<u64>() >= observed_ss)
        .fold(0.0, |acc, (_, p)| acc + p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_concordance() {
        let rows: Vec<Vec<f64>> =
            (0..10).map(|i| vec![i as f64, 1.0 + i as f64, 2.5 + i as f64, 9.0 + i as f64]).collect();
        let r = friedman(&SubjectMeans::new(labels(4), rows).unwrap()).unwrap();
        assert!((r.statistic - 30.0).abs() < 1e-9);
        assert!((r.effect_size.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.method, Method::FriedmanExact);
        // only the 24 fully concordant outcomes reach the maximum
        let expected = 24.0 / 24f64.powi(10);
        assert!((r.p_value - expected).abs() < 1e-20);
    }

    #[test]
    fn all_ties() {
        let rows = vec![vec![2.0; 4]; 6];
        let r = friedman(&SubjectMeans::new(labels(4), rows).unwrap()).unwrap();
        assert_eq!((r.statistic, r.p_value, r.effect_size), (0.0, 1.0, Some(0.0)));
    }

    #[test]
    fn chi_square_path_for_large_n() {
        let rows: Vec<Vec<f64>> = (0..35).map(|i| vec![1.0, 2.0, (i % 3) as f64, 4.0]).collect();
        let r = friedman(&SubjectMeans::new(labels(4), rows).unwrap()).unwrap();
        assert_eq!(r.method, Method::FriedmanChiSquare);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn errors() {
        assert_eq!(
            friedman(&SubjectMeans::new(labels(2), vec![vec![1.0, 2.0]; 5]).unwrap()),
            Err(StatsError::UseWilcoxon(2))
        );
        let e = SubjectMeans::new(labels(3), vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0]]).unwrap_err();
        assert_eq!(e, StatsError::MissingCell { subject: "1".into(), condition: "c2".into() });
        let e = SubjectMeans::new(labels(3), vec![vec![1.0, f64::NAN, 3.0]]).unwrap_err();
        assert!(matches!(e, StatsError::MissingCell { .. }));
    }

    #[test]
    fn permutations_of_multiset() {
        assert_eq!(distinct_permutations(vec![2, 1, 2]).len(), 3);
        assert_eq!(distinct_permutations(vec![4, 3, 2, 1]).len(), 24);
    }
}
