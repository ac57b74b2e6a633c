//! Number rendering shared by the CSV emitters.

/// Renders `x` rounded to six significant digits, without exponent notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub fn sig6_opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

/// Fixed six decimal places, used for weights.
pub fn dec6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(9.178911267), "9.17891");
        assert_eq!(sig6(324_709_000.0), "324709000");
        assert_eq!(sig6(297_410_123.0), "297410000");
        assert_eq!(sig6(0.001234567), "0.00123457");
        assert_eq!(sig6(-50.0), "-50");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.0), "0");
    }

    #[test]
    fn weights_render_fixed() {
        assert_eq!(dec6(0.2174999), "0.217500");
        assert_eq!(dec6(-1e-12), "0.000000");
        assert_eq!(dec6(1.0), "1.000000");
    }
}
