use crate::error::{Error, Result};

/// Gamma function for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// `ln(n!)`, exact summation for small `n`, log-gamma beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn known_values() {
        assert!(rel(gamma_fn(1.0).unwrap(), 1.0) < 1e-12);
        assert!(rel(gamma_fn(2.0).unwrap(), 1.0) < 1e-12);
        assert!(rel(gamma_fn(0.5).unwrap(), std::f64::consts::PI.sqrt()) < 1e-12);
    }

    #[test]
    fn matches_arbitrary_precision_reference() {
        // 40-digit mpmath evaluations
        let cases = [
            (1.0 / 12.0, 11.499_428_186_073_990_663_885_609_852_439),
            (1.7, 0.908_638_732_853_290_449_976_819_825_406_968),
        ];
        for (x, want) in cases {
            let got = gamma_fn(x).unwrap();
            assert!(rel(got, want) <= 1e-10, "gamma({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(gamma_fn(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma_fn(-1.5), Err(Error::Domain(_))));
        assert!(gamma_fn(f64::NAN).is_err());
    }

    #[test]
    fn factorials() {
        assert_eq!(ln_factorial(0), 0.0);
        assert!((ln_factorial(12) - 479_001_600f64.ln()).abs() < 1e-12);
        assert!((ln_factorial(40) - statrs::function::factorial::ln_factorial(40)).abs() < 1e-9);
    }
}
