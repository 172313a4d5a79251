use serde::{Deserialize, Serialize};

use super::friedman::SubjectMeans;
use super::wilcoxon::wilcoxon_signed_rank;
use super::{StatsError, TestResult};

/// Corrected p-values at or below this count as significant.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    /// `None` when the pair had too few non-zero differences to test.
    pub test: Option<TestResult>,
    pub p_raw: f64,
    pub p_bonf: f64,
    pub significant: bool,
    /// The condition with the smaller values by signed-rank balance.
    pub lower: Option<String>,
}

/// Every pairwise signed-rank test, Bonferroni corrected over the
/// `k(k-1)/2` comparisons. Pairs whose differences are (almost) all zero are
/// reported with `p = 1` instead of failing the whole family.
pub fn bonferroni_posthoc(m: &SubjectMeans) -> Result<Vec<PairwiseResult>, StatsError> {
    let k = m.n_conditions();
    if k < 2 {
        return Err(StatsError::TooFew { what: "conditions", needed: 2, got: k });
    }
    let comparisons = (k * (k - 1) / 2) as f64;
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (m.column(i), m.column(j));
            let test = match wilcoxon_signed_rank(&a, &b) {
                Ok(t) => Some(t),
                Err(StatsError::Degenerate | StatsError::TooFew { .. }) => None,
                Err(e) => return Err(e),
            };
            let p_raw = test.as_ref().map_or(1.0, |t| t.p_value);
            let p_bonf = (p_raw * comparisons).min(1.0);
            let lower = test.as_ref().and_then(|t| match t.effect_size {
                Some(e) if e < 0.0 => Some(m.conditions()[i].clone()),
                Some(e) if e > 0.0 => Some(m.conditions()[j].clone()),
                _ => None,
            });
            out.push(PairwiseResult {
                a: m.conditions()[i].clone(),
                b: m.conditions()[j].clone(),
                test,
                p_raw,
                p_bonf,
                significant: p_bonf <= SIGNIFICANCE,
                lower,
            });
        }
    }
    Ok(out)
}
