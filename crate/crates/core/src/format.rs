//! Locale-independent numeric formatting for CSV output.

/// Formats `x` with `digits` significant digits in plain decimal notation.
/// Zero prints as `0`; magnitudes outside `[1e-30, 1e30]` fall back to
/// scientific notation.
pub fn sig_digits(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs();
    if !(1e-30..=1e30).contains(&magnitude) {
        return format!("{:.*e}", digits - 1, x);
    }
    // exponent after rounding, so 0.0999...9 counts as 0.1
    let sci = format!("{:.*e}", digits - 1, x);
    let exponent: i64 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    let decimals = (digits as i64 - 1 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".to_string()
    } else {
        s
    }
}

/// Ten significant digits, the width used by every CSV writer here.
pub fn csv_number(x: f64) -> String {
    sig_digits(x, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_digits() {
        assert_eq!(csv_number(0.0), "0");
        assert_eq!(csv_number(1.0), "1.000000000");
        assert_eq!(csv_number(1.0 / 35.0), "0.02857142857");
        assert_eq!(csv_number(-2.5), "-2.500000000");
        assert_eq!(csv_number(462.0), "462.0000000");
        assert_eq!(sig_digits(1e-40, 3), "1.00e-40");
        assert_eq!(csv_number(0.09999999999999), "0.1000000000");
        assert_eq!(csv_number(9.9999999999999), "10.00000000");
    }
}
