//! Fixed-precision number formatting shared by every text output.

/// Significant digits used for all numeric output.
pub const SIG_DIGITS: usize = 15;

/// Formats like C's `%.15g`: 15 significant digits, trailing zeros trimmed,
/// scientific notation only for very large or small magnitudes.
pub fn sig(x: f64) -> String {
    sig_digits(x, SIG_DIGITS)
}

pub fn sig_digits(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig(0.0), "0");
        assert_eq!(sig(1.0), "1");
        assert_eq!(sig(-8.66483516272901), "-8.66483516272901");
        assert_eq!(sig(30.1478116762068), "30.1478116762068");
        assert_eq!(sig(0.278028432325324), "0.278028432325324");
        assert_eq!(sig(std::f64::consts::PI), "3.14159265358979");
        assert_eq!(sig(1e-7), "1e-07");
        assert_eq!(sig(1.5e20), "1.5e+20");
        assert_eq!(sig(123456.0), "123456");
        assert_eq!(sig(0.0001), "0.0001");
        assert_eq!(sig(9.999999999999999), "10");
        assert_eq!(sig_digits(2.0 / 3.0, 4), "0.6667");
    }
}
