use oblsample_core::memory::{Element, Enclave, ExternalMemory};
use oblsample_core::seed::Seed;
use oblsample_core::shuffle::ShuffleConfig;
use rand::seq::SliceRandom;
use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::error::Result;
use crate::format::Dataset;

/// `n` elements with random payloads. With `scatter_keys` the keys appear
/// in random order instead of `1..=n`.
pub fn synthetic(n: u64, record_size: usize, seed: Seed, scatter_keys: bool) -> Result<Dataset> {
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut keys: Vec<u64> = (1..=n).collect();
    if scatter_keys {
        keys.shuffle(&mut rng);
    }
    let elements = keys
        .into_iter()
        .map(|key| {
            let mut payload = vec![0u8; record_size];
            rng.fill_bytes(&mut payload);
            Element { key, payload }
        })
        .collect();
    Dataset::new(record_size, elements)
}

/// An enclave sized for `cfg` with `data` uploaded as the dataset region.
pub fn load(
    data: &Dataset,
    enclave_seed: Seed,
    cfg: &ShuffleConfig,
) -> Result<(Enclave, ExternalMemory)> {
    // the replication scan holds two elements
    let capacity = cfg.private_capacity.max(2);
    let mut enclave = Enclave::from_seed(enclave_seed, data.record_size, capacity);
    let mut mem = ExternalMemory::new();
    enclave.upload(&mut mem, &data.elements)?;
    Ok((enclave, mem))
}
