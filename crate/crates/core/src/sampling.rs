//! Oblivious sampling without replacement and oblivious Poisson sampling.
//!
//! Both algorithms run the same four phases over external memory:
//!
//! 1. shuffle the dataset with a secret permutation π;
//! 2. replication scan: walk the template keys `j = 1, 2, ..` and write the
//!    element currently held once per template sample containing `j`,
//!    reading the next dataset element after every write;
//! 3. shuffle the replication stream;
//! 4. reveal: decrypt the sample ids (SWO) or positions (Poisson) and place
//!    each ciphertext directly.
//!
//! The first three phases access memory in a pattern that only depends on
//! `n`, the shuffle configuration and the shuffles' retry counts. The
//! replication phase is `2 + 2n` accesses: two reads of slot 0 (the held
//! element and its successor), then `n` pairs of one write and one read of
//! the next dataset slot, capped at the last slot. Poisson padding dummies
//! follow the same write/read rhythm so that the number of real elements
//! stays hidden.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::memory::{
    Ciphertext, Element, Enclave, ExternalMemory, Phase, Record, Region, Slot, Vault,
};
use crate::prp::Permutation;
use crate::seed::{derive, Seed};
use crate::shuffle::{oblivious_shuffle, ShuffleConfig, ShuffleReport};
use crate::template::{
    feasible_prefix, PoissonTemplate, ReplicationCounts, SampleTemplate, SwoTemplate,
};

/// Sample sizes for sampling without replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleSizes {
    /// `k = n / m` samples of size `m`.
    Fixed(u64),
    /// Samples of the listed sizes, summing to `n`.
    Variable(Vec<u64>),
}

/// The secrets of one SWO run: template and the two shuffle permutations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwoSecrets {
    pub template: SwoTemplate,
    pub first: Permutation,
    pub second: Permutation,
}

impl SwoSecrets {
    pub fn derive(n: u64, sizes: &SampleSizes, seed: &Seed) -> Result<Self> {
        let template_seed = derive(seed, "swo-template", 0);
        let template = match sizes {
            SampleSizes::Fixed(m) => SwoTemplate::initialize(n, *m, &template_seed)?,
            SampleSizes::Variable(ms) => SwoTemplate::with_sizes(n, ms, &template_seed)?,
        };
        Ok(SwoSecrets {
            template,
            first: Permutation::keyed(&derive(seed, "first-shuffle", 0), n)?,
            second: Permutation::keyed(&derive(seed, "second-shuffle", 0), n)?,
        })
    }
}

/// The secrets of one Poisson run.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSecrets {
    pub template: PoissonTemplate,
    pub first: Permutation,
    pub second: Permutation,
}

impl PoissonSecrets {
    pub fn derive(n: u64, gamma: f64, k: usize, seed: &Seed) -> Result<Self> {
        Ok(PoissonSecrets {
            template: PoissonTemplate::initialize(
                n,
                gamma,
                k,
                &derive(seed, "poisson-template", 0),
            )?,
            first: Permutation::keyed(&derive(seed, "first-shuffle", 0), n)?,
            second: Permutation::keyed(&derive(seed, "second-shuffle", 0), n)?,
        })
    }
}

/// Toggles for the replication scan. Only the faithful setting is
/// oblivious; the other exists so audits can demonstrate a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    /// Read the last dataset slot after the final append instead of
    /// skipping the out-of-range read.
    pub terminal_read: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            terminal_read: true,
        }
    }
}

/// Result of a replication scan, private to the enclave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanSummary {
    /// Samples replicated (`k` for SWO, `k'` for Poisson).
    pub samples: usize,
    /// Real tuples written; the rest of the stream is padding.
    pub real: usize,
}

/// SWO samples, grouped by revealed sample id: `samples[i - 1]` is sample `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwoOutput {
    pub samples: Vec<Vec<Ciphertext>>,
}

#[derive(Debug, Clone)]
pub struct SwoRun {
    pub output: SwoOutput,
    /// Sample ids in the order the reveal phase decrypted them.
    pub revealed_ids: Vec<u64>,
    pub shuffles: [ShuffleReport; 2],
}

/// One entry of the Poisson output array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonEntry {
    pub element: Ciphertext,
    /// Encrypted sample id; 0 marks padding.
    pub sample_id: Ciphertext,
}

/// The flat array `S` of `n` entries: samples back to back, then dummies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonOutput {
    pub entries: Vec<PoissonEntry>,
}

/// Where the samples in a [`PoissonOutput`] begin and end. Known only
/// inside the enclave; never stored next to the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonBoundaries {
    pub samples: usize,
    pub sizes: Vec<u64>,
    pub real: u64,
}

#[derive(Debug, Clone)]
pub struct PoissonRun {
    pub output: PoissonOutput,
    pub boundaries: PoissonBoundaries,
    /// Positions (1-based) in the order the reveal phase decrypted them.
    pub revealed_positions: Vec<u64>,
    pub shuffles: [ShuffleReport; 2],
}

fn check_dataset(mem: &ExternalMemory, template_n: u64) -> Result<usize> {
    let n = mem.len(Region::Dataset);
    if n == 0 {
        return Err(config("dataset is empty"));
    }
    if n as u64 != template_n {
        return Err(config(alloc::format!(
            "template drawn for n = {template_n}, dataset holds {n} elements"
        )));
    }
    Ok(n)
}

fn check_shuffle(cfg: &ShuffleConfig, n: usize) -> Result<()> {
    if cfg.n != n {
        return Err(config(alloc::format!(
            "shuffle configured for n = {}, dataset holds {n}",
            cfg.n
        )));
    }
    Ok(())
}

/// Oblivious `samples_SWO`: returns the template's samples with every key
/// `j` replaced by the element at original position `m(j)`.
pub fn samples_swo(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    secrets: &SwoSecrets,
    cfg: &ShuffleConfig,
) -> Result<SwoRun> {
    samples_swo_with(enclave, mem, secrets, cfg, ScanOptions::default())
}

pub fn samples_swo_with(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    secrets: &SwoSecrets,
    cfg: &ShuffleConfig,
    opts: ScanOptions,
) -> Result<SwoRun> {
    let t = &secrets.template;
    let n = check_dataset(mem, t.domain())?;
    check_shuffle(cfg, n)?;

    mem.begin_phase(Phase::FirstShuffle);
    let first = oblivious_shuffle(enclave, mem, Region::Dataset, &secrets.first, cfg)?;

    mem.begin_phase(Phase::Replication);
    replication_scan(enclave, mem, t, t.sample_count(), false, opts)?;

    mem.begin_phase(Phase::SecondShuffle);
    let second = oblivious_shuffle(enclave, mem, Region::Scratch, &secrets.second, cfg)?;

    mem.begin_phase(Phase::Reveal);
    let (output, revealed_ids) = group_by_sample_id(enclave, mem, t.sizes())?;
    Ok(SwoRun {
        output,
        revealed_ids,
        shuffles: [first, second],
    })
}

/// Oblivious `samples_Poisson`: as many of the template's samples as fit in
/// `n` slots, laid out back to back and padded with dummies to `n`.
pub fn samples_poisson(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    secrets: &PoissonSecrets,
    cfg: &ShuffleConfig,
) -> Result<PoissonRun> {
    samples_poisson_with(enclave, mem, secrets, cfg, ScanOptions::default())
}

pub fn samples_poisson_with(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    secrets: &PoissonSecrets,
    cfg: &ShuffleConfig,
    opts: ScanOptions,
) -> Result<PoissonRun> {
    let t = &secrets.template;
    let n = check_dataset(mem, t.domain())?;
    check_shuffle(cfg, n)?;

    mem.begin_phase(Phase::FirstShuffle);
    let first = oblivious_shuffle(enclave, mem, Region::Dataset, &secrets.first, cfg)?;

    mem.begin_phase(Phase::Replication);
    let (k_prime, _) = feasible_prefix(t)?;
    let summary = replication_scan(enclave, mem, t, k_prime, true, opts)?;

    mem.begin_phase(Phase::SecondShuffle);
    let second = oblivious_shuffle(enclave, mem, Region::Scratch, &secrets.second, cfg)?;

    mem.begin_phase(Phase::Reveal);
    let (output, revealed_positions) = order_by_position(enclave, mem)?;
    Ok(PoissonRun {
        output,
        boundaries: PoissonBoundaries {
            samples: summary.samples,
            sizes: t.sizes()[..k_prime].to_vec(),
            real: summary.real as u64,
        },
        revealed_positions,
        shuffles: [first, second],
    })
}

/// Writes the replication stream for samples `1..=samples` into the scratch
/// region (`n` slots), reading the shuffled dataset.
///
/// Each tuple is `(enc(element), enc(sample id))`, plus `enc(position)` when
/// `positions` is set; the position of key `j` in sample `i` is
/// `Σ_{i' < i} size_{i'} + position_i(j)`. With positions, the stream is
/// padded to `n` tuples with `(enc(dummy), enc(0), enc(p))`.
pub fn replication_scan<T: SampleTemplate + ?Sized>(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    template: &T,
    samples: usize,
    positions: bool,
    opts: ScanOptions,
) -> Result<ScanSummary> {
    let n = check_dataset(mem, template.domain())?;
    if samples == 0 || samples > template.sample_count() {
        return Err(config(alloc::format!(
            "cannot replicate {samples} of {} samples",
            template.sample_count()
        )));
    }
    let mut offsets = Vec::with_capacity(samples);
    let mut real = 0u64;
    for i in 1..=samples {
        offsets.push(real);
        real += template.sample_size(i)?;
    }
    if real > n as u64 || (!positions && real != n as u64) {
        return Err(config(alloc::format!(
            "samples hold {real} elements for a dataset of {n}"
        )));
    }
    let real = real as usize;
    mem.allocate(Region::Scratch, n);

    // held element and its successor
    enclave.private.reserve(2)?;
    let next_index = |t: usize| t.min(n - 1);
    let element_of = |slot: Slot| -> Result<Ciphertext> {
        slot.into_parts()
            .into_iter()
            .next()
            .ok_or_else(|| Error::Malformed("empty dataset slot".into()))
    };
    let mut held = element_of(mem.read(Region::Dataset, 0)?)?;
    let mut next = element_of(mem.read(Region::Dataset, 0)?)?;

    let mut written = 0usize;
    let mut key = 1u64;
    while written < real {
        if key > n as u64 {
            return Err(Error::Malformed(
                "template ran out of keys before filling its samples".into(),
            ));
        }
        for i in 1..=samples {
            if !template.is_member(i, key)? {
                continue;
            }
            let mut parts = vec![
                enclave.vault.reseal(&held)?,
                enclave.vault.seal_u64(i as u64),
            ];
            if positions {
                let pos = offsets[i - 1] + template.position(i, key)?;
                parts.push(enclave.vault.seal_u64(pos));
            }
            mem.write(Region::Scratch, written, Slot(parts))?;
            written += 1;
            if written < n || opts.terminal_read {
                next = element_of(mem.read(Region::Dataset, next_index(written))?)?;
            }
        }
        held = next.clone();
        key += 1;
    }

    if positions {
        for t in real..n {
            let parts = vec![
                enclave.vault.encrypt(&Record::Dummy)?,
                enclave.vault.seal_u64(0),
                enclave.vault.seal_u64(t as u64 + 1),
            ];
            mem.write(Region::Scratch, t, Slot(parts))?;
            if t + 1 < n || opts.terminal_read {
                mem.read(Region::Dataset, next_index(t + 1))?;
            }
        }
    }
    enclave.private.release(2);
    Ok(ScanSummary { samples, real })
}

/// Reveals each tuple's sample id and appends its element ciphertext to
/// that sample. Sample `i` occupies its own range of the output region.
pub fn group_by_sample_id(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    sizes: &[u64],
) -> Result<(SwoOutput, Vec<u64>)> {
    let n = mem.len(Region::Scratch);
    let k = sizes.len();
    let mut offsets = Vec::with_capacity(k);
    let mut acc = 0usize;
    for &s in sizes {
        offsets.push(acc);
        acc += s as usize;
    }
    if acc != n {
        return Err(config(alloc::format!(
            "sample sizes sum to {acc}, stream holds {n}"
        )));
    }
    mem.allocate(Region::Output, n);
    let mut samples: Vec<Vec<Ciphertext>> = sizes
        .iter()
        .map(|&s| Vec::with_capacity(s as usize))
        .collect();
    let mut revealed = Vec::with_capacity(n);
    for t in 0..n {
        let parts = mem.read(Region::Scratch, t)?.into_parts();
        let [element, id]: [Ciphertext; 2] = parts
            .try_into()
            .map_err(|_| Error::Malformed("replication tuple must have two parts".into()))?;
        let id = enclave.vault.open_u64(&id)?;
        if id == 0 || id > k as u64 {
            return Err(Error::Integrity);
        }
        let i = id as usize - 1;
        if samples[i].len() as u64 >= sizes[i] {
            return Err(Error::Integrity);
        }
        mem.write(
            Region::Output,
            offsets[i] + samples[i].len(),
            Slot::single(element.clone()),
        )?;
        samples[i].push(element);
        revealed.push(id);
    }
    Ok((SwoOutput { samples }, revealed))
}

/// Reveals each tuple's position and scatters it there.
pub fn order_by_position(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
) -> Result<(PoissonOutput, Vec<u64>)> {
    let n = mem.len(Region::Scratch);
    mem.allocate(Region::Output, n);
    let mut entries: Vec<Option<PoissonEntry>> = (0..n).map(|_| None).collect();
    let mut revealed = Vec::with_capacity(n);
    for t in 0..n {
        let parts = mem.read(Region::Scratch, t)?.into_parts();
        let [element, sample_id, pos]: [Ciphertext; 3] = parts
            .try_into()
            .map_err(|_| Error::Malformed("replication tuple must have three parts".into()))?;
        let pos = enclave.vault.open_u64(&pos)?;
        if pos == 0 || pos > n as u64 || entries[pos as usize - 1].is_some() {
            return Err(Error::Integrity);
        }
        let entry = PoissonEntry { element, sample_id };
        mem.write(
            Region::Output,
            pos as usize - 1,
            Slot(vec![entry.element.clone(), entry.sample_id.clone()]),
        )?;
        entries[pos as usize - 1] = Some(entry);
        revealed.push(pos);
    }
    Ok((
        PoissonOutput {
            entries: entries
                .into_iter()
                .map(|e| e.expect("positions form a permutation"))
                .collect(),
        },
        revealed,
    ))
}

/// Decrypts SWO samples (consumer side).
pub fn open_swo(vault: &Vault, output: &SwoOutput) -> Result<Vec<Vec<Element>>> {
    output
        .samples
        .iter()
        .map(|s| {
            s.iter()
                .map(|c| match vault.decrypt(c)? {
                    Record::Real(e) => Ok(e),
                    Record::Dummy => Err(Error::Malformed("dummy inside an SWO sample".into())),
                })
                .collect()
        })
        .collect()
}

/// Decrypts the Poisson samples using the private boundaries; padding is
/// dropped. Every entry's sample id is checked against the boundaries.
pub fn open_poisson(
    vault: &Vault,
    output: &PoissonOutput,
    bounds: &PoissonBoundaries,
) -> Result<Vec<Vec<Element>>> {
    let mut samples = Vec::with_capacity(bounds.samples);
    let mut entries = output.entries.iter();
    for (i, &size) in bounds.sizes.iter().enumerate() {
        let mut sample = Vec::with_capacity(size as usize);
        for _ in 0..size {
            let e = entries
                .next()
                .ok_or_else(|| Error::Malformed("output shorter than its samples".into()))?;
            if vault.open_u64(&e.sample_id)? != i as u64 + 1 {
                return Err(Error::Malformed(alloc::format!(
                    "entry outside sample {}",
                    i + 1
                )));
            }
            match vault.decrypt(&e.element)? {
                Record::Real(el) => sample.push(el),
                Record::Dummy => {
                    return Err(Error::Malformed("dummy inside a Poisson sample".into()))
                }
            }
        }
        samples.push(sample);
    }
    for e in entries {
        if vault.open_u64(&e.sample_id)? != 0 || !vault.decrypt(&e.element)?.is_dummy() {
            return Err(Error::Malformed(
                "real element after the last sample".into(),
            ));
        }
    }
    Ok(samples)
}

/// The substitution `m(l) = π⁻¹(1 + Σ_{j<l} r_j)` relating template keys to
/// the original dataset positions whose elements replace them. Analysis
/// only: the algorithms never compute it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMapping(Vec<Option<u64>>);

impl KeyMapping {
    pub fn reconstruct(counts: &ReplicationCounts, first: &Permutation) -> Result<Self> {
        let mut offset = 1u64;
        let mut out = Vec::with_capacity(counts.as_slice().len());
        for &r in counts.as_slice() {
            if r == 0 {
                out.push(None);
            } else {
                out.push(Some(first.invert(offset)?));
            }
            offset += r;
        }
        Ok(KeyMapping(out))
    }

    /// `m(l)` for a key with `r_l ≥ 1`.
    pub fn get(&self, l: u64) -> Option<u64> {
        self.0.get((l as usize).checked_sub(1)?).copied().flatten()
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        for v in self.0.iter().flatten() {
            let idx = match (*v as usize).checked_sub(1) {
                Some(i) if i < seen.len() => i,
                _ => return false,
            };
            if core::mem::replace(&mut seen[idx], true) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prp::TablePermutation;

    fn dataset(n: u64) -> Vec<Element> {
        (1..=n)
            .map(|k| Element::new(k, [b'A' + (k - 1) as u8]))
            .collect()
    }

    fn fresh(n: u64, seed: u8) -> (Enclave, ExternalMemory) {
        let cfg = ShuffleConfig::new(n as usize);
        let mut enclave = Enclave::from_seed([seed; 32], 1, cfg.private_capacity.max(2));
        let mut mem = ExternalMemory::new();
        enclave.upload(&mut mem, &dataset(n)).unwrap();
        (enclave, mem)
    }

    #[test]
    fn n_equals_m_returns_shuffled_dataset() {
        let (mut enclave, mut mem) = fresh(8, 1);
        let secrets = SwoSecrets::derive(8, &SampleSizes::Fixed(8), &[3; 32]).unwrap();
        let run = samples_swo(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(8)).unwrap();
        assert!(run.revealed_ids.iter().all(|&i| i == 1));
        let opened = open_swo(&enclave.vault, &run.output).unwrap();
        assert_eq!(opened.len(), 1);
        let mut keys: Vec<u64> = opened[0].iter().map(|e| e.key).collect();
        keys.sort_unstable();
        assert_eq!(keys, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn each_id_revealed_m_times() {
        let (mut enclave, mut mem) = fresh(12, 2);
        let secrets = SwoSecrets::derive(12, &SampleSizes::Fixed(3), &[4; 32]).unwrap();
        let run = samples_swo(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(12)).unwrap();
        for id in 1..=4u64 {
            assert_eq!(run.revealed_ids.iter().filter(|&&x| x == id).count(), 3);
        }
        for s in open_swo(&enclave.vault, &run.output).unwrap() {
            let mut keys: Vec<u64> = s.iter().map(|e| e.key).collect();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), 3);
        }
    }

    #[test]
    fn variable_sizes() {
        let (mut enclave, mut mem) = fresh(10, 3);
        let secrets =
            SwoSecrets::derive(10, &SampleSizes::Variable(vec![1, 4, 5]), &[5; 32]).unwrap();
        let run = samples_swo(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(10)).unwrap();
        let sizes: Vec<usize> = run.output.samples.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 4, 5]);
    }

    #[test]
    fn mismatched_template_rejected() {
        let (mut enclave, mut mem) = fresh(6, 4);
        let secrets = SwoSecrets::derive(8, &SampleSizes::Fixed(2), &[5; 32]).unwrap();
        assert!(matches!(
            samples_swo(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(6)),
            Err(Error::Config(_))
        ));
        let secrets = SwoSecrets::derive(6, &SampleSizes::Fixed(2), &[5; 32]).unwrap();
        assert!(samples_swo(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(8)).is_err());
    }

    #[test]
    fn grouping_rejects_forged_ids() {
        let mut enclave = Enclave::from_seed([1; 32], 1, 8);
        let mut mem = ExternalMemory::new();
        let e = enclave.vault.encrypt(&Record::Dummy).unwrap();
        let slots = vec![
            Slot(vec![e.clone(), enclave.vault.seal_u64(1)]),
            Slot(vec![e, enclave.vault.seal_u64(3)]),
        ];
        mem.provision(Region::Scratch, slots);
        assert_eq!(
            group_by_sample_id(&mut enclave, &mut mem, &[1, 1]).unwrap_err(),
            Error::Integrity
        );
    }

    #[test]
    fn forced_full_poisson_sample_has_no_dummies() {
        let (mut enclave, mut mem) = fresh(6, 5);
        let secrets = PoissonSecrets {
            template: PoissonTemplate::from_samples(6, 0.5, &[vec![2, 5, 1, 6, 3, 4]]).unwrap(),
            first: Permutation::keyed(&[1; 32], 6).unwrap(),
            second: Permutation::keyed(&[2; 32], 6).unwrap(),
        };
        let run =
            samples_poisson(&mut enclave, &mut mem, &secrets, &ShuffleConfig::new(6)).unwrap();
        assert_eq!(run.boundaries.real, 6);
        let opened = open_poisson(&enclave.vault, &run.output, &run.boundaries).unwrap();
        let mut keys: Vec<u64> = opened[0].iter().map(|e| e.key).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn key_mapping_worked_example() {
        let t = SwoTemplate::from_samples(6, &[vec![1, 4], vec![1, 2], vec![1, 5]]).unwrap();
        let r = ReplicationCounts::compute(&t, 3).unwrap();
        let pi: Permutation = TablePermutation::from_preimages(&[4, 1, 5, 3, 6, 2])
            .unwrap()
            .into();
        let m = KeyMapping::reconstruct(&r, &pi).unwrap();
        // key 1 -> (4,D), key 2 -> (3,C), key 4 -> (6,F), key 5 -> (2,B)
        assert_eq!(m.get(1), Some(4));
        assert_eq!(m.get(2), Some(3));
        assert_eq!(m.get(3), None);
        assert_eq!(m.get(4), Some(6));
        assert_eq!(m.get(5), Some(2));
        assert_eq!(m.get(6), None);
        assert!(m.is_injective());
    }
}
