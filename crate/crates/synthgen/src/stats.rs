//! One-sample Kolmogorov–Smirnov test against the pixel prior.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::generator::PRIOR_STD;

/// `sup |F_n(x) − F(x)|` for the empirical CDF of `values`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS statistic against `N(0, 32²)`.
pub fn ks_against_prior(values: &[f64]) -> f64 {
    let prior = Normal::new(0.0, PRIOR_STD).expect("valid normal");
    ks_statistic(values, |x| prior.cdf(x))
}

/// Critical value at level `alpha` for sample size `n`, from the asymptotic
/// Kolmogorov quantile with Stephens' finite-sample correction.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let sn = (n as f64).sqrt();
    c / (sn + 0.12 + 0.11 / sn)
}

pub fn ks_rejects(values: &[f64], alpha: f64) -> bool {
    ks_against_prior(values) > ks_critical_value(values.len(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_of_uniform_grid() {
        // Midpoints of n equal cells against U(0,1): D = 1/(2n).
        let n = 50;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&v, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.01).abs() < 1e-12);
    }

    #[test]
    fn shifted_sample_rejects() {
        let v: Vec<f64> = (0..1024).map(|i| 40.0 + i as f64 * 0.01).collect();
        assert!(ks_rejects(&v, 0.01));
    }

    #[test]
    fn critical_value_known_point() {
        // c(0.01) ≈ 1.6276.
        let d = ks_critical_value(1024, 0.01);
        assert!((d * (32.0 + 0.12 + 0.11 / 32.0) - 1.6276).abs() < 1e-3);
    }
}
