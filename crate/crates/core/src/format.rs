//! Fixed-precision numeric formatting for diff-stable output files.

/// Significant digits used for every number written to CSV or JSON.
pub const SIG_DIGITS: usize = 6;

/// Formats `x` with six significant digits in the style of C's `%.6g`:
/// fixed notation for exponents in `[-4, 6)`, scientific otherwise,
/// trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so the exponent reflects the rounded value (e.g. 999999.7).
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Rounds `x` to six significant digits, for embedding in JSON.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    sig6(x).parse().unwrap_or(x)
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.4), "0.4");
        assert_eq!(sig6(-0.36062446), "-0.360624");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(999999.7), "1e+06");
        assert_eq!(sig6(123456.4), "123456");
        assert_eq!(sig6(0.0001234567), "0.000123457");
        assert_eq!(sig6(0.00001234567), "1.23457e-05");
        assert_eq!(sig6(2.5e-300), "2.5e-300");
        assert_eq!(round6(1.0 / 3.0), 0.333333);
    }
}
