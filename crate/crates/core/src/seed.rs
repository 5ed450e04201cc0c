//! Key derivation for every secret the algorithms need.
//!
//! A run is described by one master seed; template permutations, shuffle
//! permutations and generator states are derived from it with a labelled
//! SHA-256 so that the derived values are independent of each other.

use sha2::{Digest, Sha256};

/// 32 bytes of seed material.
pub type Seed = [u8; 32];

const DOMAIN: &[u8] = b"oblsample/derive/v1";

/// Derives the `index`-th sub-seed for `label` from `master`.
pub fn derive(master: &[u8], label: &str, index: u64) -> Seed {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update((master.len() as u64).to_le_bytes());
    h.update(master);
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}
