//! Deterministic float formatting for CSV output: 9 significant digits,
//! trailing zeros trimmed, scientific notation outside [1e-4, 1e9).

/// Formats with 9 significant digits (printf `%.9g` style).
pub fn fmt_sig9(value: f64) -> String {
    fmt_sig(value, 9)
}

pub fn fmt_sig(value: f64, sig: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if exponent < -4 || exponent >= sig as i32 {
        let s = format!("{:.*e}", sig - 1, value);
        trim_exp(&s)
    } else {
        let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
        let s = format!("{value:.decimals$}");
        trim_decimal(&s)
    }
}

fn trim_decimal(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

fn trim_exp(s: &str) -> String {
    match s.split_once('e') {
        Some((mantissa, exp)) => format!("{}e{}", trim_decimal(mantissa), exp),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_nine_significant_digits() {
        assert_eq!(fmt_sig9(0.123456789123), "0.123456789");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(127.5), "127.5");
        assert_eq!(fmt_sig9(0.0), "0");
    }

    #[test]
    fn switches_to_scientific_for_extremes() {
        assert_eq!(fmt_sig9(1.5e-7), "1.5e-7");
        assert_eq!(fmt_sig9(3.25e12), "3.25e12");
    }

    #[test]
    fn round_trips_close_enough() {
        for &v in &[0.123456789, 42.0, 1e-3, 255.0, 0.0001234] {
            let parsed: f64 = fmt_sig9(v).parse().unwrap();
            assert!((parsed - v).abs() <= v.abs() * 1e-8);
        }
    }
}
