//! Non-oblivious reference implementations over plaintext, for checking
//! the oblivious algorithms.

use oblsample_core::memory::Element;
use oblsample_core::prp::Permutation;
use oblsample_core::sampling::{KeyMapping, PoissonSecrets, SwoSecrets};
use oblsample_core::template::{feasible_prefix, ReplicationCounts, SampleTemplate};

use crate::error::Result;

/// `data` rearranged so the element at index `i` lands at `π(i+1) - 1`.
pub fn permute(data: &[Element], pi: &Permutation) -> Result<Vec<Element>> {
    let mut out: Vec<Option<Element>> = vec![None; data.len()];
    for (i, e) in data.iter().enumerate() {
        out[(pi.apply(i as u64 + 1)? - 1) as usize] = Some(e.clone());
    }
    Ok(out
        .into_iter()
        .map(|e| e.expect("π is a bijection"))
        .collect())
}

/// Poisson samples computed in private memory: shuffle, replicate in the
/// clear, then lay every sample out by position. Key `j` is instantiated
/// with shuffled element `1 + Σ_{l<j} r_l`.
pub fn poisson_samples(data: &[Element], secrets: &PoissonSecrets) -> Result<Vec<Vec<Element>>> {
    let t = &secrets.template;
    let shuffled = permute(data, &secrets.first)?;
    let (k_prime, cursize) = feasible_prefix(t)?;
    let mut laid_out: Vec<Option<Element>> = vec![None; cursize as usize];
    let mut base = 0u64;
    let mut bases = Vec::with_capacity(k_prime);
    for i in 1..=k_prime {
        bases.push(base);
        base += t.sample_size(i)?;
    }
    // key j takes the shuffled element after all copies written before it
    let mut appended = 0usize;
    for j in 1..=t.domain() {
        let held = appended;
        for (i, &b) in bases.iter().enumerate() {
            if t.is_member(i + 1, j)? {
                laid_out[(b + t.position(i + 1, j)? - 1) as usize] = Some(shuffled[held].clone());
                appended += 1;
            }
        }
    }
    let flat: Vec<Element> = laid_out
        .into_iter()
        .map(|e| e.expect("positions cover the prefix"))
        .collect();
    let mut out = Vec::with_capacity(k_prime);
    let mut rest = &flat[..];
    for i in 1..=k_prime {
        let (head, tail) = rest.split_at(t.sample_size(i)? as usize);
        out.push(head.to_vec());
        rest = tail;
    }
    Ok(out)
}

/// SWO samples as key sets: the template's samples with every key `j`
/// replaced by the key of the element at original position `m(j)`.
/// Each sample is sorted.
pub fn swo_samples_via_mapping(data: &[Element], secrets: &SwoSecrets) -> Result<Vec<Vec<u64>>> {
    let t = &secrets.template;
    let r = ReplicationCounts::compute(t, t.sample_count())?;
    let m = KeyMapping::reconstruct(&r, &secrets.first)?;
    (1..=t.sample_count())
        .map(|i| {
            let mut keys = t
                .members(i)?
                .into_iter()
                .map(|j| data[(m.get(j).expect("member keys have r_j ≥ 1") - 1) as usize].key)
                .collect::<Vec<_>>();
            keys.sort_unstable();
            Ok(keys)
        })
        .collect()
}
