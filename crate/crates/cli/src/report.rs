//! Output formatting: reals with 17 significant digits, in CSV and JSON.

use std::fs;
use std::path::Path;

use circlepack::flows::fmt_real;
use serde_json::value::RawValue;

use crate::error::CliError;

/// A JSON number with 17 significant digits (`null` if not finite).
pub fn num(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { fmt_real(x) } else { "null".into() };
    RawValue::from_string(text).expect("formatted real is valid JSON")
}

pub fn nums(xs: &[f64]) -> Box<RawValue> {
    let items: Vec<String> = xs
        .iter()
        .map(|&x| if x.is_finite() { fmt_real(x) } else { "null".into() })
        .collect();
    RawValue::from_string(format!("[{}]", items.join(", "))).expect("formatted list is valid JSON")
}

pub fn to_json<S: serde::Serialize>(value: &S) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        let x = 0.1 + 0.2;
        let raw = num(x);
        let back: f64 = serde_json::from_str(raw.get()).unwrap();
        assert_eq!(back, x);
        assert_eq!(num(f64::NAN).get(), "null");
        let v: Vec<f64> = serde_json::from_str(nums(&[1.0, -2.5e-300]).get()).unwrap();
        assert_eq!(v, vec![1.0, -2.5e-300]);
    }
}
