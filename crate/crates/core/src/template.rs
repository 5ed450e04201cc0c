//! Secret sample templates.
//!
//! Sample `i` of a template is the set of keys `j` with `ρ_i(j) ≤ size_i`,
//! where `ρ_i` is a secret permutation of `[1, n]`. For sampling without
//! replacement every size is `m`; for Poisson sampling each size is drawn
//! from Binomial(n, γ) when the template is initialized. Queries evaluate
//! one permutation point and need no external memory.

use alloc::vec::Vec;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::binomial::sample_binomial;
use crate::error::{config, Error, Result};
use crate::prp::{Permutation, TablePermutation};
use crate::seed::{derive, Seed};

/// Membership, size and position queries shared by both template kinds.
/// Sample ids are `1..=k`, keys are `1..=n`.
pub trait SampleTemplate {
    fn domain(&self) -> u64;

    /// Number of drawn samples `k`.
    fn sample_count(&self) -> usize;

    fn sample_size(&self, i: usize) -> Result<u64>;

    fn is_member(&self, i: usize, j: u64) -> Result<bool>;

    /// Position of key `j` within sample `i`, in `1..=size_i`.
    fn position(&self, i: usize, j: u64) -> Result<u64>;

    /// Keys of sample `i` listed by position.
    fn members(&self, i: usize) -> Result<Vec<u64>>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Samples {
    n: u64,
    sizes: Vec<u64>,
    perms: Vec<Permutation>,
}

impl Samples {
    fn check_sample(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.sizes.len() {
            return Err(Error::QueryOutOfRange(alloc::format!(
                "sample id {i} outside [1, {}]",
                self.sizes.len()
            )));
        }
        Ok(())
    }

    fn check_key(&self, j: u64) -> Result<()> {
        if j == 0 || j > self.n {
            return Err(Error::QueryOutOfRange(alloc::format!(
                "key {j} outside [1, {}]",
                self.n
            )));
        }
        Ok(())
    }

    fn size(&self, i: usize) -> Result<u64> {
        self.check_sample(i)?;
        Ok(self.sizes[i - 1])
    }

    fn member(&self, i: usize, j: u64) -> Result<bool> {
        self.check_sample(i)?;
        self.check_key(j)?;
        Ok(self.perms[i - 1].apply(j)? <= self.sizes[i - 1])
    }

    fn position(&self, i: usize, j: u64) -> Result<u64> {
        self.check_sample(i)?;
        self.check_key(j)?;
        let p = self.perms[i - 1].apply(j)?;
        if p > self.sizes[i - 1] {
            return Err(Error::NotAMember { sample: i, key: j });
        }
        Ok(p)
    }

    fn members(&self, i: usize) -> Result<Vec<u64>> {
        let size = self.size(i)?;
        (1..=size).map(|p| self.perms[i - 1].invert(p)).collect()
    }

    fn keyed(n: u64, sizes: Vec<u64>, seed: &Seed) -> Result<Self> {
        let perms = (0..sizes.len() as u64)
            .map(|i| Permutation::keyed(&derive(seed, "template-permutation", i), n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Samples { n, sizes, perms })
    }

    fn explicit(n: u64, samples: &[Vec<u64>]) -> Result<Self> {
        let mut perms = Vec::with_capacity(samples.len());
        let mut sizes = Vec::with_capacity(samples.len());
        for s in samples {
            let mut order = Vec::with_capacity(n as usize);
            let mut used = alloc::vec![false; n as usize];
            for &j in s {
                if j == 0 || j > n || used[(j - 1) as usize] {
                    return Err(config(alloc::format!(
                        "explicit sample has invalid or repeated key {j}"
                    )));
                }
                used[(j - 1) as usize] = true;
                order.push(j);
            }
            order.extend((1..=n).filter(|j| !used[(j - 1) as usize]));
            perms.push(TablePermutation::from_preimages(&order)?.into());
            sizes.push(s.len() as u64);
        }
        Ok(Samples { n, sizes, perms })
    }
}

/// k samples without replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwoTemplate {
    inner: Samples,
}

impl SwoTemplate {
    /// Draws `k = n / m` samples of size `m`; requires `m` to divide `n`.
    pub fn initialize(n: u64, m: u64, seed: &Seed) -> Result<Self> {
        if m == 0 || m > n {
            return Err(config(alloc::format!("sample size {m} outside [1, {n}]")));
        }
        if !n.is_multiple_of(m) {
            return Err(config(alloc::format!(
                "sample size {m} does not divide dataset size {n}"
            )));
        }
        let k = (n / m) as usize;
        Ok(SwoTemplate {
            inner: Samples::keyed(n, alloc::vec![m; k], seed)?,
        })
    }

    /// Samples of sizes `m_1..m_k` with `Σ m_i = n`.
    pub fn with_sizes(n: u64, sizes: &[u64], seed: &Seed) -> Result<Self> {
        check_swo_sizes(n, sizes)?;
        Ok(SwoTemplate {
            inner: Samples::keyed(n, sizes.to_vec(), seed)?,
        })
    }

    /// A template whose samples are given explicitly, e.g. to reproduce a
    /// worked example. Sample `i` lists its keys in position order.
    pub fn from_samples(n: u64, samples: &[Vec<u64>]) -> Result<Self> {
        let sizes: Vec<u64> = samples.iter().map(|s| s.len() as u64).collect();
        check_swo_sizes(n, &sizes)?;
        Ok(SwoTemplate {
            inner: Samples::explicit(n, samples)?,
        })
    }

    /// The common sample size, if all samples have the same size.
    pub fn uniform_size(&self) -> Option<u64> {
        let first = *self.inner.sizes.first()?;
        self.inner
            .sizes
            .iter()
            .all(|&s| s == first)
            .then_some(first)
    }

    pub fn sizes(&self) -> &[u64] {
        &self.inner.sizes
    }
}

fn check_swo_sizes(n: u64, sizes: &[u64]) -> Result<()> {
    if sizes.is_empty() {
        return Err(config("at least one sample is required"));
    }
    if sizes.iter().any(|&m| m == 0 || m > n) {
        return Err(config(alloc::format!(
            "every sample size must lie in [1, {n}]"
        )));
    }
    let total: u64 = sizes.iter().sum();
    if total != n {
        return Err(config(alloc::format!(
            "sample sizes sum to {total}, dataset size is {n}"
        )));
    }
    Ok(())
}

/// k Poisson samples with rate γ.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTemplate {
    inner: Samples,
    gamma: f64,
}

impl PoissonTemplate {
    pub fn initialize(n: u64, gamma: f64, k: usize, seed: &Seed) -> Result<Self> {
        check_gamma(gamma)?;
        if n == 0 {
            return Err(config("dataset must be non-empty"));
        }
        if k == 0 {
            return Err(config("at least one sample is required"));
        }
        let mut rng = ChaCha20Rng::from_seed(derive(seed, "template-sizes", 0));
        let sizes = (0..k)
            .map(|_| sample_binomial(&mut rng, n, gamma))
            .collect::<Result<Vec<_>>>()?;
        Ok(PoissonTemplate {
            inner: Samples::keyed(n, sizes, seed)?,
            gamma,
        })
    }

    /// A template with fixed sizes over explicit samples.
    pub fn from_samples(n: u64, gamma: f64, samples: &[Vec<u64>]) -> Result<Self> {
        check_gamma(gamma)?;
        if samples.is_empty() {
            return Err(config("at least one sample is required"));
        }
        Ok(PoissonTemplate {
            inner: Samples::explicit(n, samples)?,
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sizes(&self) -> &[u64] {
        &self.inner.sizes
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(config(alloc::format!("γ = {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

macro_rules! impl_template {
    ($t:ty) => {
        impl SampleTemplate for $t {
            fn domain(&self) -> u64 {
                self.inner.n
            }
            fn sample_count(&self) -> usize {
                self.inner.sizes.len()
            }
            fn sample_size(&self, i: usize) -> Result<u64> {
                self.inner.size(i)
            }
            fn is_member(&self, i: usize, j: u64) -> Result<bool> {
                self.inner.member(i, j)
            }
            fn position(&self, i: usize, j: u64) -> Result<u64> {
                self.inner.position(i, j)
            }
            fn members(&self, i: usize) -> Result<Vec<u64>> {
                self.inner.members(i)
            }
        }
    };
}

impl_template!(SwoTemplate);
impl_template!(PoissonTemplate);

/// `r_j`: in how many of the first `k'` samples key `j` appears.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicationCounts(Vec<u64>);

impl ReplicationCounts {
    pub fn compute<T: SampleTemplate + ?Sized>(t: &T, samples: usize) -> Result<Self> {
        if samples > t.sample_count() {
            return Err(Error::QueryOutOfRange(alloc::format!(
                "{samples} samples requested, template has {}",
                t.sample_count()
            )));
        }
        let mut r = alloc::vec![0u64; t.domain() as usize];
        for i in 1..=samples {
            for j in t.members(i)? {
                r[(j - 1) as usize] += 1;
            }
        }
        Ok(ReplicationCounts(r))
    }

    /// `r_j` for key `j ∈ [1, n]`.
    pub fn get(&self, j: u64) -> u64 {
        self.0[(j - 1) as usize]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Largest `k' ≤ k` whose first `k'` sample sizes sum to at most `n`
/// (at least 1), with that sum.
pub fn feasible_prefix<T: SampleTemplate + ?Sized>(t: &T) -> Result<(usize, u64)> {
    let n = t.domain();
    let mut k_prime = 1;
    let mut cursize = t.sample_size(1)?;
    while k_prime < t.sample_count() {
        let next = t.sample_size(k_prime + 1)?;
        if cursize + next > n {
            break;
        }
        k_prime += 1;
        cursize += next;
    }
    Ok((k_prime, cursize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seed(i: u8) -> Seed {
        [i; 32]
    }

    #[test]
    fn swo_n6_m2_has_three_samples_of_two() {
        let t = SwoTemplate::initialize(6, 2, &seed(1)).unwrap();
        assert_eq!(t.sample_count(), 3);
        for i in 1..=3 {
            let count = (1..=6).filter(|&j| t.is_member(i, j).unwrap()).count();
            assert_eq!(count, 2);
            assert_eq!(t.members(i).unwrap().len(), 2);
        }
    }

    #[test]
    fn swo_whole_domain_when_m_equals_n() {
        let t = SwoTemplate::initialize(4, 4, &seed(2)).unwrap();
        assert_eq!(t.sample_count(), 1);
        let mut keys = t.members(1).unwrap();
        keys.sort_unstable();
        assert_eq!(keys, vec![1, 2, 3, 4]);
    }

    #[test]
    fn swo_is_deterministic() {
        let a = SwoTemplate::initialize(6, 2, &seed(3)).unwrap();
        let b = SwoTemplate::initialize(6, 2, &seed(3)).unwrap();
        for i in 1..=3 {
            for j in 1..=6 {
                assert_eq!(a.is_member(i, j).unwrap(), b.is_member(i, j).unwrap());
            }
        }
    }

    #[test]
    fn swo_n2_m1_exactly_one_member() {
        for s in 0..20 {
            let t = SwoTemplate::initialize(2, 1, &seed(s)).unwrap();
            let a = t.is_member(1, 1).unwrap();
            let b = t.is_member(1, 2).unwrap();
            assert!(a ^ b);
        }
    }

    #[test]
    fn swo_configuration_errors() {
        assert!(matches!(
            SwoTemplate::initialize(6, 4, &seed(0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SwoTemplate::initialize(6, 0, &seed(0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SwoTemplate::initialize(6, 7, &seed(0)),
            Err(Error::Config(_))
        ));
        assert!(SwoTemplate::with_sizes(6, &[1, 2, 2], &seed(0)).is_err());
        let t = SwoTemplate::with_sizes(6, &[1, 2, 3], &seed(0)).unwrap();
        assert_eq!(t.uniform_size(), None);
        for (i, want) in [(1usize, 1usize), (2, 2), (3, 3)] {
            assert_eq!(
                (1..=6).filter(|&j| t.is_member(i, j).unwrap()).count(),
                want
            );
        }
    }

    #[test]
    fn query_ranges_enforced() {
        let t = SwoTemplate::initialize(6, 2, &seed(0)).unwrap();
        assert!(matches!(t.is_member(0, 1), Err(Error::QueryOutOfRange(_))));
        assert!(matches!(t.is_member(4, 1), Err(Error::QueryOutOfRange(_))));
        assert!(matches!(t.is_member(1, 0), Err(Error::QueryOutOfRange(_))));
        assert!(matches!(t.is_member(1, 7), Err(Error::QueryOutOfRange(_))));
    }

    #[test]
    fn worked_example_replication_counts() {
        let t = SwoTemplate::from_samples(6, &[vec![1, 4], vec![1, 2], vec![1, 5]]).unwrap();
        let r = ReplicationCounts::compute(&t, 3).unwrap();
        assert_eq!(r.as_slice(), &[3, 1, 0, 1, 1, 0]);
        assert_eq!(r.total(), 6);
        assert!(t.is_member(1, 4).unwrap());
        assert!(!t.is_member(1, 2).unwrap());
        assert_eq!(t.position(3, 5).unwrap(), 2);
    }

    #[test]
    fn replication_counts_sum_to_n() {
        for s in 0..10 {
            let t = SwoTemplate::initialize(24, 4, &seed(s)).unwrap();
            assert_eq!(ReplicationCounts::compute(&t, 6).unwrap().total(), 24);
        }
        let t = SwoTemplate::initialize(5, 5, &seed(9)).unwrap();
        assert!(ReplicationCounts::compute(&t, 1)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&r| r == 1));
        assert!(ReplicationCounts::compute(&t, 2).is_err());
    }

    #[test]
    fn poisson_queries() {
        let t = PoissonTemplate::initialize(50, 0.2, 6, &seed(4)).unwrap();
        for i in 1..=6 {
            let size = t.sample_size(i).unwrap();
            let members: Vec<u64> = (1..=50).filter(|&j| t.is_member(i, j).unwrap()).collect();
            assert_eq!(members.len() as u64, size);
            let mut pos: Vec<u64> = members.iter().map(|&j| t.position(i, j).unwrap()).collect();
            pos.sort_unstable();
            assert_eq!(pos, (1..=size).collect::<Vec<_>>());
            if let Some(j) = (1..=50).find(|&j| !t.is_member(i, j).unwrap()) {
                assert_eq!(
                    t.position(i, j),
                    Err(Error::NotAMember { sample: i, key: j })
                );
            }
        }
        let prefix: u64 = t.sizes().iter().take(3).sum();
        let r = ReplicationCounts::compute(&t, 3).unwrap();
        assert_eq!(r.total(), prefix);
    }

    #[test]
    fn poisson_rejects_degenerate_gamma() {
        for g in [0.0, 1.0, -1.0, 2.0] {
            assert!(matches!(
                PoissonTemplate::initialize(10, g, 2, &seed(0)),
                Err(Error::Config(_))
            ));
        }
        assert!(PoissonTemplate::initialize(10, 0.5, 0, &seed(0)).is_err());
    }

    #[test]
    fn poisson_sizes_deterministic() {
        let a = PoissonTemplate::initialize(1000, 0.05, 8, &seed(7)).unwrap();
        let b = PoissonTemplate::initialize(1000, 0.05, 8, &seed(7)).unwrap();
        assert_eq!(a.sizes(), b.sizes());
    }

    #[test]
    fn feasible_prefix_stops_before_overflow() {
        let t = PoissonTemplate::from_samples(
            6,
            0.5,
            &[vec![1, 2], vec![3, 4, 5], vec![1, 6], vec![2]],
        )
        .unwrap();
        assert_eq!(feasible_prefix(&t).unwrap(), (2, 5));
        let full = PoissonTemplate::from_samples(3, 0.5, &[vec![3, 1, 2]]).unwrap();
        assert_eq!(feasible_prefix(&full).unwrap(), (1, 3));
    }
}
