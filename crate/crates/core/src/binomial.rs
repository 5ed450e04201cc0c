//! Exact Binomial(n, p) variates by inverse transform.
//!
//! The probability mass is walked upwards from zero with the ratio
//! recurrence kept in log space, so `P(X = 0) = (1-p)^n` underflowing to
//! zero does not stall the walk: later terms are still computed from their
//! log-probability.

use rand_core::RngCore;

use crate::error::{domain, Result};

/// A uniform double in [0, 1) with 53 random bits.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws from Binomial(`n`, `p`) for `p ∈ (0, 1)`.
pub fn sample_binomial<R: RngCore + ?Sized>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("binomial success probability must lie in (0, 1)"));
    }
    let u = unit_f64(rng);
    Ok(inverse_cdf(n, p, u))
}

/// Smallest `x` with `P(X ≤ x) > u`.
pub fn inverse_cdf(n: u64, p: f64, u: f64) -> u64 {
    let log_odds = libm::log(p) - libm::log1p(-p);
    let mut log_pmf = n as f64 * libm::log1p(-p);
    let mut cdf = 0.0;
    for x in 0..n {
        cdf += libm::exp(log_pmf);
        if cdf > u {
            return x;
        }
        log_pmf += libm::log((n - x) as f64 / (x + 1) as f64) + log_odds;
    }
    // rounding left the accumulated mass just short of u
    n
}

/// `ln P(X = x)` for X ~ Binomial(n, p); used by tests and audits.
pub fn log_pmf(n: u64, p: f64, x: u64) -> f64 {
    if x > n {
        return f64::NEG_INFINITY;
    }
    ln_choose(n, x) + x as f64 * libm::log(p) + (n - x) as f64 * libm::log1p(-p)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn rejects_degenerate_probabilities() {
        let mut rng = ChaCha20Rng::from_seed([0; 32]);
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(sample_binomial(&mut rng, 10, p).is_err());
        }
    }

    #[test]
    fn inverse_cdf_boundaries() {
        // n = 1 is a Bernoulli: 0 below 1-p, 1 above
        assert_eq!(inverse_cdf(1, 0.3, 0.69), 0);
        assert_eq!(inverse_cdf(1, 0.3, 0.71), 1);
        assert_eq!(inverse_cdf(10, 0.5, 0.0), 0);
        assert_eq!(inverse_cdf(10, 0.5, 1.0 - 1e-16), 10);
        assert_eq!(inverse_cdf(0, 0.5, 0.3), 0);
    }

    #[test]
    fn inverse_cdf_matches_direct_cdf() {
        // Independent route: cumulative sum of lgamma-based pmf.
        let (n, p) = (20u64, 0.25);
        let mut cdf = 0.0;
        for x in 0..=n {
            let lo = cdf;
            cdf += libm::exp(log_pmf(n, p, x));
            let mid = (lo + cdf) / 2.0;
            assert_eq!(inverse_cdf(n, p, mid), x, "x={x}");
        }
    }

    #[test]
    fn large_n_does_not_stall_on_underflow() {
        // (1/2)^1e6 underflows; the walk must still land near the mean.
        let x = inverse_cdf(1_000_000, 0.5, 0.5);
        assert!((499_000..=501_000).contains(&x), "{x}");
    }

    #[test]
    fn pmf_sums_to_one() {
        let s: f64 = (0..=50).map(|x| libm::exp(log_pmf(50, 0.1, x))).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
