use thiserror::Error;

/// A configuration value that failed validation. `field` is the dotted path
/// of the offending entry, e.g. `widget.tt_pos`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }

    /// Prefixes the field path with `parent.`.
    pub fn nested(self, parent: &str) -> Self {
        Self { field: format!("{parent}.{}", self.field), reason: self.reason }
    }
}

pub(crate) fn require_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be a positive finite number, got {v}")))
    }
}

pub(crate) fn require_non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be >= 0, got {v}")))
    }
}
