//! Serialization helpers shared by every report type.
//!
//! Floating-point values are written as decimal strings with 17 significant
//! digits, which round-trips any `f64` exactly.

use serde::Serializer;

/// Format `x` with 17 significant digits in scientific notation.
pub fn format_sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// `serialize_with` adapter for `f64` fields.
pub fn sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_sig17(*x))
}

/// `serialize_with` adapter for `Vec<f64>` fields.
pub fn sig17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| format_sig17(*x)))
}

/// `serialize_with` adapter for `Option<f64>` fields.
pub fn sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&format_sig17(*v)),
        None => s.serialize_none(),
    }
}
