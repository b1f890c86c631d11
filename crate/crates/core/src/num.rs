//! Decimal text encoding for reals in every artifact file.

/// Formats a float so that parsing the text yields the same bits.
///
/// Small integral values are written plainly; everything else uses
/// scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keeps the sign of -0.0 out of artifact files
        return "0".to_string();
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{:.16e}", x)
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}
