//! Small-domain pseudo-random permutations.
//!
//! A [`Prp`] is a swap-or-not shuffle over exactly `[0, n)`: round `r`
//! pairs `x` with `K_r - x mod n` and swaps the pair when a keyed bit of
//! the pair is set. Round keys and bits come from SipHash-2-4 under a key
//! derived from the permutation seed. The domain needs no cycle walking and
//! evaluation is a fixed number of rounds with no per-element memory.

use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use siphasher::sip::SipHasher24;

use crate::error::{Error, Result};
use crate::seed::{derive, Seed};

/// Fewest rounds for any domain.
pub const MIN_ROUNDS: u32 = 48;

/// Rounds per bit of domain width once that exceeds [`MIN_ROUNDS`].
pub const ROUNDS_PER_BIT: u32 = 6;

#[derive(Clone, PartialEq, Eq)]
pub struct Prp {
    n: u64,
    k0: u64,
    k1: u64,
    round_keys: Vec<u64>,
}

impl core::fmt::Debug for Prp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        // keys stay out of logs
        f.debug_struct("Prp")
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl Prp {
    pub fn new(seed: &Seed, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("permutation domain must be non-empty".into()));
        }
        if n > 1 << 62 {
            return Err(Error::Config("permutation domain exceeds 2^62".into()));
        }
        let bits = 64 - (n - 1).leading_zeros();
        let rounds = MIN_ROUNDS.max(ROUNDS_PER_BIT * bits);
        let key = derive(seed, "prp-round-key", 0);
        let mut p = Prp {
            n,
            k0: u64::from_le_bytes(key[..8].try_into().unwrap()),
            k1: u64::from_le_bytes(key[8..16].try_into().unwrap()),
            round_keys: Vec::with_capacity(rounds as usize),
        };
        for r in 0..rounds {
            let h = p.hash(0, r, 0);
            // widening multiply maps a uniform word onto [0, n)
            p.round_keys.push(((h as u128 * n as u128) >> 64) as u64);
        }
        Ok(p)
    }

    pub fn domain(&self) -> u64 {
        self.n
    }

    pub fn rounds(&self) -> usize {
        self.round_keys.len()
    }

    fn hash(&self, tag: u8, r: u32, v: u64) -> u64 {
        let mut h = SipHasher24::new_with_keys(self.k0, self.k1);
        h.write_u8(tag);
        h.write_u32(r);
        h.write_u64(self.n);
        h.write_u64(v);
        h.finish()
    }

    fn round(&self, r: usize, x: u64) -> u64 {
        let k = self.round_keys[r];
        let partner = if k >= x { k - x } else { k + self.n - x };
        if self.hash(1, r as u32, x.max(partner)) & 1 == 1 {
            partner
        } else {
            x
        }
    }

    fn check(&self, x: u64) -> Result<()> {
        if x == 0 || x > self.n {
            return Err(Error::QueryOutOfRange(alloc::format!(
                "{x} outside permutation domain [1, {}]",
                self.n
            )));
        }
        Ok(())
    }

    /// Image of `x ∈ [1, n]`.
    pub fn apply(&self, x: u64) -> Result<u64> {
        self.check(x)?;
        Ok((0..self.rounds()).fold(x - 1, |v, r| self.round(r, v)) + 1)
    }

    /// Preimage of `y ∈ [1, n]`.
    pub fn invert(&self, y: u64) -> Result<u64> {
        self.check(y)?;
        Ok((0..self.rounds())
            .rev()
            .fold(y - 1, |v, r| self.round(r, v))
            + 1)
    }
}

/// An explicit permutation table over `[1, n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePermutation {
    forward: Vec<u64>,
    inverse: Vec<u64>,
}

impl TablePermutation {
    /// `images[x - 1]` is the image of `x`.
    pub fn new(images: Vec<u64>) -> Result<Self> {
        let n = images.len() as u64;
        if n == 0 {
            return Err(Error::Config("permutation domain must be non-empty".into()));
        }
        let mut inverse = vec![0u64; images.len()];
        for (i, &y) in images.iter().enumerate() {
            if y == 0 || y > n || inverse[(y - 1) as usize] != 0 {
                return Err(Error::Config(alloc::format!(
                    "table is not a permutation of [1, {n}] (value {y})"
                )));
            }
            inverse[(y - 1) as usize] = i as u64 + 1;
        }
        Ok(TablePermutation {
            forward: images,
            inverse,
        })
    }

    pub fn identity(n: u64) -> Self {
        let v: Vec<u64> = (1..=n).collect();
        TablePermutation {
            forward: v.clone(),
            inverse: v,
        }
    }

    /// Permutation that maps `order[t]` to `t + 1`: listing the preimages in
    /// order.
    pub fn from_preimages(order: &[u64]) -> Result<Self> {
        let t = Self::new(order.to_vec())?;
        Ok(TablePermutation {
            forward: t.inverse,
            inverse: t.forward,
        })
    }
}

/// A secret permutation of `[1, n]`, keyed (O(1) memory) or tabulated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Permutation {
    Keyed(Prp),
    Table(TablePermutation),
}

impl Permutation {
    pub fn keyed(seed: &Seed, n: u64) -> Result<Self> {
        Prp::new(seed, n).map(Permutation::Keyed)
    }

    pub fn domain(&self) -> u64 {
        match self {
            Permutation::Keyed(p) => p.domain(),
            Permutation::Table(t) => t.forward.len() as u64,
        }
    }

    fn check(&self, x: u64) -> Result<()> {
        if x == 0 || x > self.domain() {
            return Err(Error::QueryOutOfRange(alloc::format!(
                "{x} outside permutation domain [1, {}]",
                self.domain()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: u64) -> Result<u64> {
        match self {
            Permutation::Keyed(p) => p.apply(x),
            Permutation::Table(t) => {
                self.check(x)?;
                Ok(t.forward[(x - 1) as usize])
            }
        }
    }

    pub fn invert(&self, y: u64) -> Result<u64> {
        match self {
            Permutation::Keyed(p) => p.invert(y),
            Permutation::Table(t) => {
                self.check(y)?;
                Ok(t.inverse[(y - 1) as usize])
            }
        }
    }
}

impl From<Prp> for Permutation {
    fn from(p: Prp) -> Self {
        Permutation::Keyed(p)
    }
}

impl From<TablePermutation> for Permutation {
    fn from(t: TablePermutation) -> Self {
        Permutation::Table(t)
    }
}
