//! Fixed-point number formatting shared by every byte-stable output
//! (render frames, dataset CSV, wire messages).

use serde::Serializer;
use serde_json::value::RawValue;

/// Formats `v` with exactly six decimals. Negative zero prints as zero.
pub fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_owned()
    } else {
        s
    }
}

/// Serializes a float as a six-decimal JSON number literal.
///
/// Only meaningful for `serde_json` serializers; non-finite values are
/// emitted as `null`.
pub fn serialize_fixed6<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !v.is_finite() {
        return s.serialize_none();
    }
    let raw = RawValue::from_string(fixed6(*v)).map_err(serde::ser::Error::custom)?;
    serde::Serialize::serialize(&raw, s)
}

pub(crate) fn serialize_fixed6_slice<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Fixed6(*x))?;
    }
    seq.end()
}

/// Newtype wrapper that serializes through [`serialize_fixed6`].
#[derive(Debug, Clone, Copy)]
pub struct Fixed6(pub f64);

impl serde::Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_fixed6(&self.0, s)
    }
}
