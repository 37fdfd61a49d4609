//! Overflow-safe scalar helpers.

/// `log(1 + e^a)` without overflow for large `|a|`.
#[inline]
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Logistic sigmoid, evaluated on the side that never overflows.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(v)`; returns `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for a in [-30.0, -2.5, -1e-3, 0.0, 0.7, 12.0, 30.0] {
            let naive = (1.0 + f64::exp(a)).ln();
            assert!((softplus(a) - naive).abs() < 1e-14, "a = {a}");
        }
    }

    #[test]
    fn extremes_stay_finite() {
        for a in [-700.0, -300.0, 300.0, 700.0] {
            assert!(softplus(a).is_finite());
            assert!(sigmoid(a).is_finite());
        }
        assert_eq!(softplus(700.0), 700.0);
        assert!(softplus(-700.0) >= 0.0);
        assert_eq!(sigmoid(700.0), 1.0);
        assert!(sigmoid(-700.0) >= 0.0);
    }

    #[test]
    fn sigmoid_symmetry() {
        for a in [0.0, 0.3, 4.0, 40.0] {
            assert!((sigmoid(a) + sigmoid(-a) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(50.0)) < 1e-15);
    }

    #[test]
    fn logsumexp_basic() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        let v = [1000.0, 1000.0];
        assert!((logsumexp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((LN_2PI - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
