//! Goodness-of-fit helpers for the audits.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Pearson chi-square statistic and upper-tail p-value of `observed`
/// against `expected`, with `observed.len() - 1` degrees of freedom.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    assert!(observed.len() >= 2, "chi-square needs at least two cells");
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("df ≥ 1").sf(stat);
    (stat, p)
}

/// Chi-square against equal expected counts.
pub fn chi_square_uniform(observed: &[u64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let e = total as f64 / observed.len() as f64;
    chi_square(observed, &vec![e; observed.len()])
}

/// Largest `|count - trials·p| / sqrt(trials·p·(1-p))` over `counts` and
/// its two-sided normal p-value.
pub fn max_abs_z(counts: &[u64], trials: u64, p: f64) -> (f64, f64) {
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    let z = counts
        .iter()
        .map(|&c| (c as f64 - mean).abs() / sd)
        .fold(0.0, f64::max);
    (z, two_sided_normal_p(z))
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * Normal::standard().sf(z.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_p_one() {
        let (s, p) = chi_square_uniform(&[10, 10, 10, 10]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_tail() {
        // statistic 11.07 at df 5 is the 5% critical value
        let (s, p) = chi_square(&[0, 0, 0, 0, 0, 0], &[1.0; 6]);
        assert_eq!(s, 6.0);
        assert!((p - 0.306_218_5).abs() < 1e-6);
        let sf = ChiSquared::new(5.0).unwrap().sf(11.070_497_693);
        assert!((sf - 0.05).abs() < 1e-8);
    }

    #[test]
    fn gross_bias_rejected() {
        let (_, p) = chi_square_uniform(&[1000, 0, 0, 0]);
        assert!(p < 1e-100);
    }

    #[test]
    fn z_scores() {
        let (z, p) = max_abs_z(&[50, 60], 100, 0.5);
        assert!((z - 2.0).abs() < 1e-12);
        assert!((p - 0.045_500_26).abs() < 1e-7);
    }
}
