//! Oblivious shuffle of an encrypted external array.
//!
//! Two distribution passes in the Melbourne style. Each pass streams the
//! input in chunks that fit in private memory and routes every element into
//! one of `B` buckets, writing a fixed number of padded cells per
//! (chunk, bucket) pair. A cleanup step then streams each bucket, drops the
//! dummies privately and writes the bucket's destination range in order.
//!
//! The first pass routes by a fresh random permutation σ and carries the
//! target position π(i) encrypted next to the element. The second pass
//! routes by that carried position. Since π∘σ⁻¹ is uniform whatever π is,
//! cell overflow never depends on π or on the data; on overflow the attempt
//! is finished through the second distribution step (so every failed attempt
//! leaves the same trace) and the shuffle restarts with a new σ. The retry
//! count is visible to the adversary.
//!
//! With a private capacity of `p` elements and `B = ⌈n/p⌉` buckets, a
//! retry-free run makes `4n + 4·B²·cell` external accesses.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::memory::{ceil_sqrt, Ciphertext, Enclave, ExternalMemory, Region, Slot, Vault};
use crate::prp::Permutation;

/// Default private capacity is this multiple of ⌈√n⌉ element slots.
pub const DEFAULT_CAPACITY_SCALE: usize = 6;
pub const DEFAULT_PADDING: f64 = 2.0;
pub const DEFAULT_RETRY_LIMIT: u32 = 16;

/// Route tag of a padding dummy inside the buckets.
const DUMMY_ROUTE: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleConfig {
    pub n: usize,
    /// Pass-count parameter; private memory is O(n^{1/c}).
    pub c: u32,
    /// Private memory available to the shuffle, in element slots.
    pub private_capacity: usize,
    /// Cell capacity as a multiple of the expected cell load.
    pub padding: f64,
    pub retry_limit: u32,
}

/// Bucket geometry derived from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub buckets: usize,
    /// Elements per input chunk and per bucket destination range.
    pub chunk: usize,
    /// Padded slots per (chunk, bucket) cell.
    pub cell: usize,
}

impl Layout {
    fn range(&self, n: usize, b: usize) -> core::ops::Range<usize> {
        b * self.chunk..((b + 1) * self.chunk).min(n)
    }

    /// Slots in the bucket region.
    pub fn bucket_slots(&self) -> usize {
        self.buckets * self.buckets * self.cell
    }

    fn cell_base(&self, bucket: usize, chunk: usize) -> usize {
        (bucket * self.buckets + chunk) * self.cell
    }
}

impl ShuffleConfig {
    pub fn new(n: usize) -> Self {
        ShuffleConfig {
            n,
            c: 2,
            private_capacity: (DEFAULT_CAPACITY_SCALE * ceil_sqrt(n)).clamp(1, n.max(1)),
            padding: DEFAULT_PADDING,
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }

    pub fn with_padding(mut self, padding: f64) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_private_capacity(mut self, capacity: usize) -> Self {
        self.private_capacity = capacity;
        self
    }

    pub fn with_passes(mut self, c: u32) -> Self {
        self.c = c;
        self
    }

    pub fn with_retry_limit(mut self, limit: u32) -> Self {
        self.retry_limit = limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config("cannot shuffle an empty array"));
        }
        if self.c < 2 {
            return Err(config("pass parameter c must be at least 2"));
        }
        if self.c != 2 {
            return Err(config(alloc::format!(
                "c = {} is not supported; only the two-level (c = 2) shuffle is implemented",
                self.c
            )));
        }
        if self.private_capacity == 0 {
            return Err(config("private capacity must be positive"));
        }
        if !self.padding.is_finite() || self.padding <= 1.0 {
            return Err(config("padding factor must be a finite number above 1"));
        }
        if self.retry_limit == 0 {
            return Err(config("retry limit must allow at least one attempt"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let n = self.n.max(1);
        let p = self.private_capacity.clamp(1, n);
        let chunk = n.div_ceil(n.div_ceil(p));
        let buckets = n.div_ceil(chunk);
        let expected = (chunk * chunk) as f64 / n as f64;
        let cell = (libm::ceil(self.padding * expected) as usize).clamp(1, chunk);
        Layout {
            buckets,
            chunk,
            cell,
        }
    }

    /// External accesses of a retry-free run.
    pub fn access_cost(&self) -> usize {
        4 * self.n + 4 * self.layout().bucket_slots()
    }

    /// External accesses of an attempt that overflowed: a full first pass
    /// plus the second distribution step.
    pub fn failed_attempt_cost(&self) -> usize {
        3 * self.n + 3 * self.layout().bucket_slots()
    }
}

/// Public outcome of a shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleReport {
    pub attempts: u32,
    pub accesses: usize,
}

impl ShuffleReport {
    pub fn retries(&self) -> u32 {
        self.attempts - 1
    }
}

struct Routed {
    route: u64,
    carry: Option<u64>,
    parts: Vec<Ciphertext>,
}

/// Rearranges `region` so that the element at index `i` moves to index
/// `π(i+1) - 1`, re-encrypting every ciphertext.
pub fn oblivious_shuffle(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    region: Region,
    pi: &Permutation,
    cfg: &ShuffleConfig,
) -> Result<ShuffleReport> {
    cfg.validate()?;
    let n = cfg.n;
    if mem.len(region) != n {
        return Err(config(alloc::format!(
            "region `{region}` holds {} slots, shuffle configured for {n}",
            mem.len(region)
        )));
    }
    if pi.domain() != n as u64 {
        return Err(config(alloc::format!(
            "permutation domain {} does not match n = {n}",
            pi.domain()
        )));
    }
    if matches!(region, Region::Buckets | Region::Staging) {
        return Err(config("cannot shuffle the shuffle's own work regions"));
    }
    let layout = cfg.layout();
    mem.allocate(Region::Buckets, layout.bucket_slots());
    mem.allocate(Region::Staging, n);
    let start = mem.trace().len();

    for attempt in 1..=cfg.retry_limit {
        let sigma = Permutation::keyed(&enclave.fresh_seed(), n as u64)?;

        let mut shape: Option<Vec<usize>> = None;
        let first_ok = distribute(
            enclave,
            mem,
            region,
            &layout,
            n,
            &mut shape,
            |_, i, slot| {
                let x = i as u64 + 1;
                Ok(Routed {
                    route: sigma.apply(x)? - 1,
                    carry: Some(pi.apply(x)? - 1),
                    parts: slot.into_parts(),
                })
            },
        )?;
        let shape = shape.expect("n ≥ 1, so at least one slot was read");
        collect(enclave, mem, Region::Staging, &layout, n, &shape, true)?;

        let mut carried_shape = Some(shape.clone());
        let second_ok = distribute(
            enclave,
            mem,
            Region::Staging,
            &layout,
            n,
            &mut carried_shape,
            |vault, _, slot| {
                let mut parts = slot.into_parts();
                let tag = parts
                    .pop()
                    .ok_or_else(|| Error::Malformed("missing carried position".into()))?;
                Ok(Routed {
                    route: vault.open_u64(&tag)?,
                    carry: None,
                    parts,
                })
            },
        )?;

        if first_ok && second_ok {
            collect(enclave, mem, region, &layout, n, &shape, false)?;
            return Ok(ShuffleReport {
                attempts: attempt,
                accesses: mem.trace().len() - start,
            });
        }
    }
    Err(Error::ShuffleRetriesExhausted {
        attempts: cfg.retry_limit,
    })
}

/// Streams `src` chunk by chunk into padded bucket cells. Returns false if
/// any cell overflowed (overflowing elements are dropped).
fn distribute<F>(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    src: Region,
    layout: &Layout,
    n: usize,
    shape: &mut Option<Vec<usize>>,
    mut route_of: F,
) -> Result<bool>
where
    F: FnMut(&mut Vault, usize, Slot) -> Result<Routed>,
{
    let mut ok = true;
    let mut cells: Vec<Vec<Routed>> = (0..layout.buckets).map(|_| Vec::new()).collect();
    for c in 0..layout.buckets {
        let range = layout.range(n, c);
        enclave.private.reserve(range.len())?;
        for i in range.clone() {
            let slot = mem.read(src, i)?;
            if shape.is_none() {
                *shape = Some(slot.parts().iter().map(Ciphertext::plaintext_len).collect());
            }
            let routed = route_of(&mut enclave.vault, i, slot)?;
            if routed.route == DUMMY_ROUTE {
                // a hole left by an overflowed first pass
                continue;
            }
            let b = routed.route as usize / layout.chunk;
            if b >= layout.buckets {
                return Err(Error::Malformed(alloc::format!(
                    "route {} out of range",
                    routed.route
                )));
            }
            cells[b].push(routed);
        }
        let shape = shape.as_deref().expect("chunk is non-empty");
        for (b, cell) in cells.iter_mut().enumerate() {
            if cell.len() > layout.cell {
                ok = false;
                cell.truncate(layout.cell);
            }
            let base = layout.cell_base(b, c);
            let mut items = cell.drain(..);
            for t in 0..layout.cell {
                let slot = match items.next() {
                    Some(r) => {
                        let mut parts = Vec::with_capacity(r.parts.len() + 2);
                        for p in &r.parts {
                            parts.push(enclave.vault.reseal(p)?);
                        }
                        parts.push(enclave.vault.seal_u64(r.route));
                        parts.push(enclave.vault.seal_u64(r.carry.unwrap_or(DUMMY_ROUTE)));
                        Slot(parts)
                    }
                    None => dummy_slot(enclave, shape, 2),
                };
                mem.write(Region::Buckets, base + t, slot)?;
            }
        }
        enclave.private.release(range.len());
    }
    Ok(ok)
}

fn dummy_slot(enclave: &mut Enclave, shape: &[usize], tags: usize) -> Slot {
    let mut parts: Vec<Ciphertext> = shape
        .iter()
        .map(|&len| enclave.vault.seal(&vec![0u8; len]))
        .collect();
    for _ in 0..tags {
        parts.push(enclave.vault.seal_u64(DUMMY_ROUTE));
    }
    Slot(parts)
}

/// Streams each bucket, keeps its real elements privately and writes the
/// bucket's destination range of `dst` in order. With `keep_carry` the
/// carried position stays attached for the next pass.
fn collect(
    enclave: &mut Enclave,
    mem: &mut ExternalMemory,
    dst: Region,
    layout: &Layout,
    n: usize,
    shape: &[usize],
    keep_carry: bool,
) -> Result<()> {
    let width = shape.len();
    for b in 0..layout.buckets {
        let range = layout.range(n, b);
        enclave.private.reserve(range.len())?;
        let mut held: Vec<Option<(Vec<Ciphertext>, Ciphertext)>> =
            (0..range.len()).map(|_| None).collect();
        let base = layout.cell_base(b, 0);
        for t in 0..layout.buckets * layout.cell {
            let mut parts = mem.read(Region::Buckets, base + t)?.into_parts();
            if parts.len() != width + 2 {
                return Err(Error::Malformed("bucket slot has the wrong arity".into()));
            }
            let carry = parts.pop().unwrap();
            let route = enclave.vault.open_u64(&parts.pop().unwrap())?;
            if route == DUMMY_ROUTE {
                continue;
            }
            let offset = (route as usize)
                .checked_sub(range.start)
                .filter(|&o| o < range.len())
                .ok_or_else(|| {
                    Error::Malformed(alloc::format!(
                        "element routed to the wrong bucket ({route})"
                    ))
                })?;
            if held[offset].replace((parts, carry)).is_some() {
                return Err(Error::Malformed(alloc::format!(
                    "two elements routed to {route}"
                )));
            }
        }
        for (o, entry) in held.into_iter().enumerate() {
            let slot = match entry {
                Some((parts, carry)) => {
                    let mut out = Vec::with_capacity(width + 1);
                    for p in &parts {
                        out.push(enclave.vault.reseal(p)?);
                    }
                    if keep_carry {
                        out.push(enclave.vault.reseal(&carry)?);
                    }
                    Slot(out)
                }
                // only after an overflow; the attempt is discarded anyway
                None => dummy_slot(enclave, shape, usize::from(keep_carry)),
            };
            mem.write(dst, range.start + o, slot)?;
        }
        enclave.private.release(range.len());
    }
    Ok(())
}
