//! Nonparametric analysis of within-subject condition comparisons.
//!
//! * [`friedman`]: omnibus test over k conditions with Kendall's W.
//! * [`wilcoxon_signed_rank`]: paired two-condition test.
//! * [`bonferroni_posthoc`]: all pairwise Wilcoxon tests, Bonferroni
//!   corrected.
//! * [`pearson`]: product-moment correlation with strength bands.
//! * [`analyze`]: the full pipeline over a trial dataset.
//!
//! All tests use average ranks for ties and report two-sided p-values unless
//! an [`Alternative`] is passed explicitly.

mod analyze;
mod friedman;
mod pearson;
mod posthoc;
mod rank;
mod wilcoxon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analyze::{analyze, BoxSummary, CorrelationEntry, Descriptive, Metric, MetricReport, RadarRow, StatsReport};
pub use friedman::{friedman, SubjectMeans, FRIEDMAN_EXACT_MAX_K, FRIEDMAN_EXACT_MAX_N};
pub use pearson::{pearson, pearson_test, Correlation, Strength};
pub use posthoc::{bonferroni_posthoc, PairwiseResult, SIGNIFICANCE};
pub use rank::average_ranks;
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, WILCOXON_EXACT_MAX_N};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("missing cell: subject {subject}, condition {condition}")]
    MissingCell { subject: String, condition: String },
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("Friedman needs k >= 3 conditions (got {0}); use the Wilcoxon signed-rank test for two")]
    UseWilcoxon(usize),
    #[error("all paired differences are zero")]
    Degenerate,
    #[error("correlation undefined: {0} is constant")]
    Constant(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no trials")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Friedman with chi-square approximation.
    FriedmanChiSquare,
    /// Friedman with the exact within-subject permutation distribution.
    FriedmanExact,
    WilcoxonExact,
    /// Normal approximation with continuity correction.
    WilcoxonNormal,
    PearsonT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    /// Kendall's W for Friedman, rank-biserial correlation for Wilcoxon.
    pub effect_size: Option<f64>,
    /// Standardized statistic, where one is meaningful.
    pub z: Option<f64>,
    /// Number of subjects (Friedman) or non-zero pairs (Wilcoxon).
    pub n: usize,
}

pub(crate) fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}
