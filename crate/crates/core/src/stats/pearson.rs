use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check_finite, StatsError};

/// Verbal strength of |r|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    VeryWeak,
    Weak,
    Moderate,
    Strong,
}

impl Strength {
    pub fn of(r: f64) -> Self {
        let a = r.abs();
        if a >= 0.6 {
            Strength::Strong
        } else if a >= 0.4 {
            Strength::Moderate
        } else if a >= 0.2 {
            Strength::Weak
        } else {
            Strength::VeryWeak
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strength::VeryWeak => "very weak",
            Strength::Weak => "weak",
            Strength::Moderate => "moderate",
            Strength::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from Student's t with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
    pub strength: Strength,
}

/// Product-moment correlation, accumulated in a single pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { what: "points", needed: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        let k = (i + 1) as f64;
        let dx = xi - mx;
        let dy = yi - my;
        mx += dx / k;
        my += dy / k;
        sxx += dx * (xi - mx);
        syy += dy * (yi - my);
        sxy += dx * (yi - my);
    }
    // A spread this small relative to the data is rounding residue.
    let is_constant = |s: f64, v: &[f64]| {
        let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(f64::MIN_POSITIVE);
        s <= (scale * 1e-14).powi(2) * v.len() as f64
    };
    if is_constant(sxx, x) {
        return Err(StatsError::Constant("x"));
    }
    if is_constant(syy, y) {
        return Err(StatsError::Constant("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// [`pearson`] plus significance and strength band.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    let r = pearson(x, y)?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p_value: p, n, strength: Strength::of(r) })
}
