//! Deterministic number formatting for CSV and JSON artifacts.

use crate::scalar::Real;

/// Formats a scalar with nine significant digits in plain decimal notation.
///
/// All CSV emitters in this crate route numbers through here so that
/// repeated runs produce byte-identical files.
pub fn sig9<R: Real>(v: R) -> String {
    format_sig(v.to_f64().unwrap_or(f64::NAN), 9)
}

fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.9043814577244937f64), "0.904381458");
        assert_eq!(sig9(0.2f64), "0.200000000");
        assert_eq!(sig9(0.0f64), "0.00000000");
        assert_eq!(sig9(1.0f64), "1.00000000");
        assert_eq!(sig9(-0.15f64), "-0.150000000");
        assert_eq!(sig9(12.25f64), "12.2500000");
    }

    #[test]
    fn tiny_values_keep_significance() {
        assert_eq!(sig9(1.25e-6f64), "0.00000125000000");
    }
}
