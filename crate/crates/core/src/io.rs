//! Text formats shared by the library and the command line.

use crate::error::{Error, Result};

/// Format with 17 significant digits, which round-trips every `f64`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        // Keep the sign of negative zero out of the files.
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// One value per line, 17 significant digits.
pub fn points_to_csv(points: &[f64]) -> String {
    let mut out = String::with_capacity(points.len() * 24);
    for p in points {
        out.push_str(&sig17(*p));
        out.push('\n');
    }
    out
}

/// Inverse of [`points_to_csv`]; blank lines are ignored.
pub fn points_from_csv(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::invalid(format!("line {}: non-finite value", i + 1)))
                    }
                })
        })
        .collect()
}
