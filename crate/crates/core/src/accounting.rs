//! Closed-form differential-privacy accounting: Gaussian calibration,
//! amplification by subsampling, strong and parallel composition, and
//! per-epoch budgets for the three sampling methods.
//!
//! All logarithms are natural. `ln(1 + x)` and `e^x - 1` go through
//! `log1p`/`expm1` so small sampling rates keep their precision.

use crate::error::{domain, Result};

/// An (ε, δ) guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(domain(alloc::format!(
                "ε must be finite and non-negative, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(domain(alloc::format!("δ must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }
}

/// Noise calibration of the Gaussian mechanism: noise `N(0, σ²Δ_f²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMechanism {
    pub sigma: f64,
    pub sensitivity: f64,
}

impl GaussianMechanism {
    pub fn calibrate(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(domain("sensitivity must be positive"));
        }
        Ok(GaussianMechanism {
            sigma: gaussian_sigma(epsilon, delta)?,
            sensitivity,
        })
    }

    /// Standard deviation of the added noise, `σ·Δ_f`.
    pub fn std_dev(&self) -> f64 {
        self.sigma * self.sensitivity
    }
}

/// `σ = √(2 ln(1.25/δ)) / ε`, valid for ε, δ ∈ (0, 1).
pub fn gaussian_sigma(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(alloc::format!(
            "ε must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(alloc::format!("δ must lie in (0, 1), got {delta}")));
    }
    Ok(libm::sqrt(2.0 * libm::log(1.25 / delta)) / epsilon)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(domain(alloc::format!(
            "ε must be finite and non-negative, got {epsilon}"
        )));
    }
    Ok(())
}

/// ε′ = ln(1 + γ(e^ε − 1)) for a mechanism run on a Poisson subsample.
pub fn amplify_poisson(epsilon: f64, gamma: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(alloc::format!("γ must lie in (0, 1], got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(epsilon);
    }
    Ok(libm::log1p(gamma * libm::expm1(epsilon)))
}

/// ε′ = ln(1 + (m/n)(e^ε − 1)) for a sample of `m` out of `n` without
/// replacement.
pub fn amplify_swo(epsilon: f64, m: u64, n: u64) -> Result<f64> {
    if m == 0 || m > n {
        return Err(domain(alloc::format!(
            "need 1 ≤ m ≤ n, got m = {m}, n = {n}"
        )));
    }
    amplify_poisson(epsilon, m as f64 / n as f64)
}

/// The amplified pair (ε′, γδ).
pub fn amplify_budget(step: PrivacyBudget, gamma: f64) -> Result<PrivacyBudget> {
    PrivacyBudget::new(amplify_poisson(step.epsilon, gamma)?, gamma * step.delta)
}

/// T-fold adaptive composition of an (ε, δ) mechanism:
/// `(ε√(2T ln(1/δ″)) + Tε(e^ε − 1), Tδ + δ″)`.
pub fn strong_composition(
    epsilon: f64,
    delta: f64,
    t: u64,
    delta_slack: f64,
) -> Result<PrivacyBudget> {
    check_epsilon(epsilon)?;
    if t == 0 {
        return Err(domain("composition needs T ≥ 1"));
    }
    if !(delta_slack > 0.0 && delta_slack < 1.0) {
        return Err(domain(alloc::format!(
            "δ″ must lie in (0, 1), got {delta_slack}"
        )));
    }
    let t = t as f64;
    let eps = epsilon * libm::sqrt(2.0 * t * libm::log(1.0 / delta_slack))
        + t * epsilon * libm::expm1(epsilon);
    PrivacyBudget::new(eps, t * delta + delta_slack)
}

/// Mechanisms on disjoint data compose to the largest ε.
pub fn parallel_composition(epsilons: &[f64]) -> Result<f64> {
    let (&first, rest) = epsilons
        .split_first()
        .ok_or_else(|| domain("parallel composition of nothing"))?;
    check_epsilon(first)?;
    rest.iter().try_fold(first, |acc, &e| {
        check_epsilon(e)?;
        Ok(acc.max(e))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingKind {
    Poisson {
        gamma: f64,
    },
    Swo {
        m: u64,
        n: u64,
    },
    /// Disjoint batches of `m` from one shuffle of `n`.
    Shuffle {
        m: u64,
        n: u64,
    },
}

/// How a mechanism is invoked: `t` samples per epoch over `epochs` epochs,
/// with slack `delta_slack` for composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub kind: SamplingKind,
    pub t: u64,
    pub epochs: u64,
    pub delta_slack: f64,
}

impl SamplingSpec {
    /// Sampling rate; `m/n` for the fixed-size methods.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            SamplingKind::Poisson { gamma } => gamma,
            SamplingKind::Swo { m, n } | SamplingKind::Shuffle { m, n } => m as f64 / n as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 || self.epochs == 0 {
            return Err(domain("T and E must be at least 1"));
        }
        match self.kind {
            SamplingKind::Poisson { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(domain(alloc::format!("γ must lie in (0, 1], got {gamma}")))
            }
            SamplingKind::Swo { m, n } | SamplingKind::Shuffle { m, n } if m == 0 || m > n => Err(
                domain(alloc::format!("need 1 ≤ m ≤ n, got m = {m}, n = {n}")),
            ),
            SamplingKind::Shuffle { m, n } if self.t > n / m => Err(domain(alloc::format!(
                "a shuffle of {n} yields at most {} disjoint batches of {m}, not {}",
                n / m,
                self.t
            ))),
            _ => Ok(()),
        }
    }
}

/// Budget of one invocation after sampling, and of the whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochBudget {
    pub step: PrivacyBudget,
    pub total: PrivacyBudget,
}

/// Total budget of running an (ε, δ) mechanism under `spec`.
///
/// Poisson and SWO amplify each step to `(ε′, γδ)` and strong-compose over
/// all `T·E` steps. A shuffle's batches are disjoint, so one epoch costs
/// the per-step (ε, δ); several epochs strong-compose over `E`.
pub fn epoch_budget(spec: &SamplingSpec, per_step: PrivacyBudget) -> Result<EpochBudget> {
    spec.validate()?;
    match spec.kind {
        SamplingKind::Shuffle { .. } => {
            let step =
                PrivacyBudget::new(parallel_composition(&[per_step.epsilon])?, per_step.delta)?;
            let total = if spec.epochs == 1 {
                step
            } else {
                strong_composition(step.epsilon, step.delta, spec.epochs, spec.delta_slack)?
            };
            Ok(EpochBudget { step, total })
        }
        SamplingKind::Poisson { .. } | SamplingKind::Swo { .. } => {
            let step = amplify_budget(per_step, spec.gamma())?;
            let steps = spec
                .t
                .checked_mul(spec.epochs)
                .ok_or_else(|| domain("T·E overflows"))?;
            let total = strong_composition(step.epsilon, step.delta, steps, spec.delta_slack)?;
            Ok(EpochBudget { step, total })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values below were evaluated independently at 50 digits.

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigma_reference() {
        assert!(close(
            gaussian_sigma(0.5, 1e-5).unwrap(),
            9.689_610_525_210_778,
            1e-9
        ));
        let delta = 1.25 / core::f64::consts::E.powi(2);
        assert!(close(gaussian_sigma(1.0 - 1e-9, delta).unwrap(), 2.0, 1e-6));
        assert!(gaussian_sigma(0.3, 1e-5).unwrap() > gaussian_sigma(0.6, 1e-5).unwrap());
    }

    #[test]
    fn sigma_domain() {
        for (e, d) in [
            (0.0, 1e-5),
            (1.0, 1e-5),
            (0.5, 0.0),
            (0.5, 1.0),
            (f64::NAN, 0.1),
        ] {
            assert!(gaussian_sigma(e, d).is_err(), "({e}, {d})");
        }
    }

    #[test]
    fn amplification_reference() {
        assert!(close(
            amplify_poisson(1.0, 0.01).unwrap(),
            0.017_036_863_236_176_55,
            1e-12
        ));
        assert_eq!(amplify_poisson(0.7, 1.0).unwrap(), 0.7);
        assert_eq!(
            amplify_swo(1.0, 600, 60000).unwrap(),
            amplify_poisson(1.0, 0.01).unwrap()
        );
        assert_eq!(amplify_swo(0.3, 50, 50).unwrap(), 0.3);
        assert!(amplify_poisson(1.0, 0.0).is_err());
        assert!(amplify_poisson(1.0, 1.5).is_err());
        assert!(amplify_swo(1.0, 11, 10).is_err());
        assert!(amplify_swo(1.0, 0, 10).is_err());
    }

    #[test]
    fn amplified_delta_scales_by_gamma() {
        let b = amplify_budget(PrivacyBudget::new(1.0, 1e-6).unwrap(), 0.01).unwrap();
        assert!(close(b.delta, 1e-8, 1e-22));
    }

    #[test]
    fn strong_composition_reference() {
        let b = strong_composition(0.1, 0.0, 1, 1e-6).unwrap();
        assert!(close(b.epsilon, 0.536_169_268_783_258, 1e-12));
        assert_eq!(b.delta, 1e-6);
        let b = strong_composition(0.2, 1e-7, 100, 1e-5).unwrap();
        assert!(close(b.delta, 2e-5, 1e-20));
        let zero = strong_composition(0.0, 1e-7, 10, 1e-5).unwrap();
        assert_eq!(zero.epsilon, 0.0);
        assert!(strong_composition(0.1, 0.0, 1, 0.0).is_err());
        assert!(strong_composition(0.1, 0.0, 0, 1e-6).is_err());
    }

    #[test]
    fn parallel_is_max() {
        assert_eq!(parallel_composition(&[0.5]).unwrap(), 0.5);
        assert_eq!(parallel_composition(&[0.1, 0.9, 0.3]).unwrap(), 0.9);
        assert!(parallel_composition(&[]).is_err());
    }

    fn spec(kind: SamplingKind, t: u64, epochs: u64) -> SamplingSpec {
        SamplingSpec {
            kind,
            t,
            epochs,
            delta_slack: 1e-6,
        }
    }

    #[test]
    fn epoch_budget_shuffle_single_epoch() {
        let step = PrivacyBudget::new(0.5, 1e-5).unwrap();
        let b = epoch_budget(&spec(SamplingKind::Shuffle { m: 10, n: 100 }, 10, 1), step).unwrap();
        assert_eq!(b.total, step);
        let err = epoch_budget(&spec(SamplingKind::Shuffle { m: 10, n: 100 }, 11, 1), step);
        assert!(err.is_err());
        let multi =
            epoch_budget(&spec(SamplingKind::Shuffle { m: 10, n: 100 }, 10, 4), step).unwrap();
        assert_eq!(multi.total, strong_composition(0.5, 1e-5, 4, 1e-6).unwrap());
    }

    #[test]
    fn epoch_budget_swo_reference() {
        let step = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let b = epoch_budget(&spec(SamplingKind::Swo { m: 600, n: 60000 }, 100, 1), step).unwrap();
        assert!(close(b.step.epsilon, 0.017_036_863_236_176_55, 1e-12));
        assert!(close(b.total.epsilon, 0.924_820_557_405_999_8, 1e-10));
        assert!(close(b.total.delta, 2e-6, 1e-18));
        let p = epoch_budget(&spec(SamplingKind::Poisson { gamma: 0.01 }, 100, 1), step).unwrap();
        assert_eq!(p, b);
    }
}
