//! The simulated TEE: a bounded private memory, an adversary-visible
//! external memory that only ever stores ciphertexts, and the recorder that
//! logs every external access.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::seed::{derive, Seed};

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Bytes a ciphertext carries on top of its plaintext.
pub const CIPHERTEXT_OVERHEAD: usize = NONCE_LEN + TAG_LEN;

const REAL_MARKER: u8 = 1;
const DUMMY_MARKER: u8 = 0;

/// A keyed record of the dataset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Element {
    pub key: u64,
    pub payload: Vec<u8>,
}

impl Element {
    pub fn new(key: u64, payload: impl Into<Vec<u8>>) -> Self {
        Element {
            key,
            payload: payload.into(),
        }
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match core::str::from_utf8(&self.payload) {
            Ok(s) => write!(f, "({},{:?})", self.key, s),
            Err(_) => write!(f, "({},{:02x?})", self.key, self.payload),
        }
    }
}

/// Plaintext of an element slot: a real element or a padding dummy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Record {
    Real(Element),
    Dummy,
}

impl Record {
    pub fn is_dummy(&self) -> bool {
        matches!(self, Record::Dummy)
    }

    pub fn element(&self) -> Option<&Element> {
        match self {
            Record::Real(e) => Some(e),
            Record::Dummy => None,
        }
    }

    /// Plaintext length of a record with `record_size` payload bytes.
    pub const fn encoded_len(record_size: usize) -> usize {
        1 + 8 + record_size
    }

    /// Discriminator byte, key, payload. Dummies are zero-filled to the
    /// same length.
    pub fn encode(&self, record_size: usize) -> Result<Vec<u8>> {
        let mut out = vec![0u8; Self::encoded_len(record_size)];
        if let Record::Real(e) = self {
            if e.payload.len() != record_size {
                return Err(Error::Config(alloc::format!(
                    "payload of key {} has {} bytes, dataset record size is {}",
                    e.key,
                    e.payload.len(),
                    record_size
                )));
            }
            out[0] = REAL_MARKER;
            out[1..9].copy_from_slice(&e.key.to_le_bytes());
            out[9..].copy_from_slice(&e.payload);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], record_size: usize) -> Result<Record> {
        if bytes.len() != Self::encoded_len(record_size) {
            return Err(Error::Malformed(alloc::format!(
                "record plaintext has {} bytes, expected {}",
                bytes.len(),
                Self::encoded_len(record_size)
            )));
        }
        match bytes[0] {
            DUMMY_MARKER => Ok(Record::Dummy),
            REAL_MARKER => {
                let key = u64::from_le_bytes(bytes[1..9].try_into().unwrap());
                Ok(Record::Real(Element::new(key, &bytes[9..])))
            }
            b => Err(Error::Malformed(alloc::format!(
                "unknown record marker {b}"
            ))),
        }
    }
}

/// Opaque authenticated ciphertext: `nonce || body || tag`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(Box<[u8]>);

impl Ciphertext {
    pub fn from_bytes(bytes: impl Into<Box<[u8]>>) -> Self {
        Ciphertext(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Length of the plaintext this ciphertext decrypts to.
    pub fn plaintext_len(&self) -> usize {
        self.0.len().saturating_sub(CIPHERTEXT_OVERHEAD)
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes, ", self.0.len())?;
        for b in self.0.iter().take(6) {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// The in-enclave AES-256-GCM key plus the nonce generator.
///
/// Every `seal` draws a fresh 96-bit nonce, so sealing the same plaintext
/// twice never yields the same bytes.
pub struct Vault {
    cipher: Aes256Gcm,
    nonces: ChaCha20Rng,
    record_size: usize,
}

impl Vault {
    pub fn new(key: [u8; 32], nonce_seed: Seed, record_size: usize) -> Self {
        Vault {
            cipher: Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&key)),
            nonces: ChaCha20Rng::from_seed(nonce_seed),
            record_size,
        }
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    /// Ciphertext length of an element (real or dummy).
    pub fn element_ciphertext_len(&self) -> usize {
        Record::encoded_len(self.record_size) + CIPHERTEXT_OVERHEAD
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Ciphertext {
        let mut nonce = [0u8; NONCE_LEN];
        self.nonces.fill_bytes(&mut nonce);
        let body = self
            .cipher
            .encrypt(Nonce::from_slice(&nonce), plaintext)
            .expect("AES-GCM encryption is infallible for in-memory buffers");
        let mut out = Vec::with_capacity(NONCE_LEN + body.len());
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&body);
        Ciphertext(out.into_boxed_slice())
    }

    pub fn open(&self, c: &Ciphertext) -> Result<Vec<u8>> {
        if c.len() < CIPHERTEXT_OVERHEAD {
            return Err(Error::Integrity);
        }
        let (nonce, body) = c.0.split_at(NONCE_LEN);
        self.cipher
            .decrypt(Nonce::from_slice(nonce), body)
            .map_err(|_| Error::Integrity)
    }

    pub fn encrypt(&mut self, record: &Record) -> Result<Ciphertext> {
        let pt = record.encode(self.record_size)?;
        Ok(self.seal(&pt))
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<Record> {
        Record::decode(&self.open(c)?, self.record_size)
    }

    pub fn seal_u64(&mut self, v: u64) -> Ciphertext {
        self.seal(&v.to_le_bytes())
    }

    pub fn open_u64(&self, c: &Ciphertext) -> Result<u64> {
        let pt = self.open(c)?;
        let bytes: [u8; 8] = pt.as_slice().try_into().map_err(|_| {
            Error::Malformed(alloc::format!("integer plaintext of {} bytes", pt.len()))
        })?;
        Ok(u64::from_le_bytes(bytes))
    }

    /// Decrypts and seals again under a fresh nonce.
    pub fn reseal(&mut self, c: &Ciphertext) -> Result<Ciphertext> {
        let pt = self.open(c)?;
        Ok(self.seal(&pt))
    }
}

/// Content of one external-memory slot: a fixed tuple of ciphertexts, for
/// example `(enc(element), enc(sample id))` in the replication stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot(pub Vec<Ciphertext>);

impl Slot {
    pub fn single(c: Ciphertext) -> Self {
        Slot(vec![c])
    }

    pub fn parts(&self) -> &[Ciphertext] {
        &self.0
    }

    pub fn into_parts(self) -> Vec<Ciphertext> {
        self.0
    }

    pub fn byte_len(&self) -> usize {
        self.0.iter().map(Ciphertext::len).sum()
    }
}

/// Named arrays of external memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// The outsourced dataset.
    Dataset,
    /// The replication stream written by the sampling scans.
    Scratch,
    /// Final grouped or ordered samples.
    Output,
    /// Padded buckets of the shuffle's distribution pass.
    Buckets,
    /// Output of the shuffle's first pass.
    Staging,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::Dataset,
        Region::Scratch,
        Region::Output,
        Region::Buckets,
        Region::Staging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::Dataset => "dataset",
            Region::Scratch => "scratch",
            Region::Output => "output",
            Region::Buckets => "buckets",
            Region::Staging => "staging",
        }
    }

    pub fn from_name(name: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.name() == name)
    }

    fn idx(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Read => "read",
            Op::Write => "write",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        match name {
            "read" => Some(Op::Read),
            "write" => Some(Op::Write),
            _ => None,
        }
    }
}

/// One adversary-visible access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessRecord {
    pub region: Region,
    pub op: Op,
    pub index: usize,
}

impl AccessRecord {
    pub fn read(region: Region, index: usize) -> Self {
        AccessRecord {
            region,
            op: Op::Read,
            index,
        }
    }

    pub fn write(region: Region, index: usize) -> Self {
        AccessRecord {
            region,
            op: Op::Write,
            index,
        }
    }
}

/// `region<TAB>op<TAB>index`, the canonical line form without the newline.
impl fmt::Display for AccessRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}",
            self.region.name(),
            self.op.name(),
            self.index
        )
    }
}

/// Algorithm phases. Phase markers are bookkeeping for audits; they are not
/// part of what the adversary sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// A standalone oblivious shuffle.
    Shuffle,
    /// Shuffle of the dataset before replication.
    FirstShuffle,
    /// Replication scan, including Poisson dummy padding.
    Replication,
    /// Shuffle of the replication stream.
    SecondShuffle,
    /// Grouping by revealed sample id, or ordering by revealed position.
    Reveal,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Shuffle => "shuffle",
            Phase::FirstShuffle => "first-shuffle",
            Phase::Replication => "replication",
            Phase::SecondShuffle => "second-shuffle",
            Phase::Reveal => "reveal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PhaseMark {
    phase: Phase,
    start: usize,
}

/// Append-only log of external accesses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    records: Vec<AccessRecord>,
    marks: Vec<PhaseMark>,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<AccessRecord>) -> Self {
        AccessTrace {
            records,
            marks: Vec::new(),
        }
    }

    pub fn push(&mut self, record: AccessRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[AccessRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&AccessRecord> {
        self.records.last()
    }

    /// Starts `phase` at the current end of the trace. A phase runs until
    /// the next mark or the end of the trace.
    pub fn begin_phase(&mut self, phase: Phase) {
        self.marks.push(PhaseMark {
            phase,
            start: self.records.len(),
        });
    }

    pub fn phases(&self) -> impl Iterator<Item = (Phase, Range<usize>)> + '_ {
        self.marks.iter().enumerate().map(move |(i, m)| {
            let end = self
                .marks
                .get(i + 1)
                .map_or(self.records.len(), |next| next.start);
            (m.phase, m.start..end)
        })
    }

    /// Record range of the first occurrence of `phase`.
    pub fn phase_range(&self, phase: Phase) -> Option<Range<usize>> {
        self.phases().find(|(p, _)| *p == phase).map(|(_, r)| r)
    }

    pub fn phase_records(&self, phase: Phase) -> &[AccessRecord] {
        self.phase_range(phase)
            .map_or(&[][..], |r| &self.records[r])
    }

    /// Records of the listed phases, concatenated in trace order.
    pub fn records_in(&self, phases: &[Phase]) -> Vec<AccessRecord> {
        let mut out = Vec::new();
        for (p, r) in self.phases() {
            if phases.contains(&p) {
                out.extend_from_slice(&self.records[r]);
            }
        }
        out
    }

    /// Number of records per region, in `Region::ALL` order.
    pub fn counts_by_region(&self) -> [(Region, usize); 5] {
        let mut counts = Region::ALL.map(|r| (r, 0usize));
        for rec in &self.records {
            counts[rec.region.idx()].1 += 1;
        }
        counts
    }

    pub fn write_canonical<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        write_canonical(&self.records, out)
    }

    /// One `region\top\tindex\n` line per record.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 16);
        self.write_canonical(&mut s)
            .expect("writing to a String cannot fail");
        s
    }
}

pub fn write_canonical<W: fmt::Write>(records: &[AccessRecord], out: &mut W) -> fmt::Result {
    for r in records {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

/// Adversary-visible storage.
#[derive(Debug, Clone, Default)]
pub struct ExternalMemory {
    regions: [Vec<Option<Slot>>; 5],
    trace: AccessTrace,
}

impl ExternalMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resizes `region` to `len` empty slots. Allocation is public and not
    /// traced.
    pub fn allocate(&mut self, region: Region, len: usize) {
        let r = &mut self.regions[region.idx()];
        r.clear();
        r.resize(len, None);
    }

    /// Uploads initial contents (the data owner provisioning the dataset).
    /// Not traced: it happens before the enclave runs.
    pub fn provision(&mut self, region: Region, slots: Vec<Slot>) {
        self.regions[region.idx()] = slots.into_iter().map(Some).collect();
    }

    pub fn len(&self, region: Region) -> usize {
        self.regions[region.idx()].len()
    }

    fn check(&self, region: Region, index: usize) -> Result<()> {
        let len = self.len(region);
        if index >= len {
            return Err(Error::OutOfBounds { region, index, len });
        }
        Ok(())
    }

    pub fn read(&mut self, region: Region, index: usize) -> Result<Slot> {
        self.check(region, index)?;
        self.trace.push(AccessRecord::read(region, index));
        self.regions[region.idx()][index]
            .clone()
            .ok_or(Error::EmptySlot { region, index })
    }

    pub fn write(&mut self, region: Region, index: usize, slot: Slot) -> Result<()> {
        self.check(region, index)?;
        self.trace.push(AccessRecord::write(region, index));
        self.regions[region.idx()][index] = Some(slot);
        Ok(())
    }

    /// Untraced view of a region's contents. The adversary sees contents
    /// anyway; this is how tests and consumers inspect results.
    pub fn contents(&self, region: Region) -> &[Option<Slot>] {
        &self.regions[region.idx()]
    }

    pub fn trace(&self) -> &AccessTrace {
        &self.trace
    }

    pub fn begin_phase(&mut self, phase: Phase) {
        self.trace.begin_phase(phase);
    }

    pub fn take_trace(&mut self) -> AccessTrace {
        core::mem::take(&mut self.trace)
    }
}

/// Slot bookkeeping for the enclave's private memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrivateMemory {
    capacity: usize,
    used: usize,
    peak: usize,
}

impl PrivateMemory {
    pub fn new(capacity: usize) -> Self {
        PrivateMemory {
            capacity,
            used: 0,
            peak: 0,
        }
    }

    /// ⌈√n⌉ element slots.
    pub fn for_dataset(n: usize) -> Self {
        Self::new(ceil_sqrt(n).max(1))
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn reserve(&mut self, slots: usize) -> Result<()> {
        if self.used + slots > self.capacity {
            return Err(Error::PrivateMemoryExceeded {
                requested: slots,
                used: self.used,
                capacity: self.capacity,
            });
        }
        self.used += slots;
        self.peak = self.peak.max(self.used);
        Ok(())
    }

    pub fn release(&mut self, slots: usize) {
        debug_assert!(
            slots <= self.used,
            "releasing more private slots than reserved"
        );
        self.used = self.used.saturating_sub(slots);
    }

    /// Grows the capacity to at least `capacity` slots.
    pub fn ensure_capacity(&mut self, capacity: usize) {
        self.capacity = self.capacity.max(capacity);
    }
}

pub(crate) fn ceil_sqrt(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Trusted side of the machine: the key, private memory and a private
/// randomness source for fresh secrets drawn during a run.
pub struct Enclave {
    pub vault: Vault,
    pub private: PrivateMemory,
    rng: ChaCha20Rng,
}

impl Enclave {
    pub fn new(key: [u8; 32], seed: Seed, record_size: usize, private_capacity: usize) -> Self {
        Enclave {
            vault: Vault::new(key, derive(&seed, "nonces", 0), record_size),
            private: PrivateMemory::new(private_capacity),
            rng: ChaCha20Rng::from_seed(derive(&seed, "enclave-rng", 0)),
        }
    }

    /// Key and generator state both derived from `seed`.
    pub fn from_seed(seed: Seed, record_size: usize, private_capacity: usize) -> Self {
        Self::new(derive(&seed, "key", 0), seed, record_size, private_capacity)
    }

    /// A fresh 32-byte secret from the enclave generator.
    pub fn fresh_seed(&mut self) -> Seed {
        let mut s = [0u8; 32];
        self.rng.fill_bytes(&mut s);
        s
    }

    /// Encrypts `elements` and provisions them as the dataset region.
    pub fn upload(&mut self, mem: &mut ExternalMemory, elements: &[Element]) -> Result<()> {
        let slots = elements
            .iter()
            .map(|e| Ok(Slot::single(self.vault.encrypt(&Record::Real(e.clone()))?)))
            .collect::<Result<Vec<_>>>()?;
        mem.provision(Region::Dataset, slots);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn vault() -> Vault {
        Vault::new([7u8; 32], [9u8; 32], 1)
    }

    #[test]
    fn fresh_nonce_per_encryption() {
        let mut v = vault();
        let e = Record::Real(Element::new(3, *b"C"));
        let a = v.encrypt(&e).unwrap();
        let b = v.encrypt(&e).unwrap();
        assert_ne!(a, b);
        assert_eq!(v.decrypt(&a).unwrap(), e);
        assert_eq!(v.decrypt(&b).unwrap(), e);
    }

    #[test]
    fn thousand_encryptions_pairwise_distinct() {
        let mut v = vault();
        let e = Record::Real(Element::new(1, *b"A"));
        let set: BTreeSet<Vec<u8>> = (0..1000)
            .map(|_| v.encrypt(&e).unwrap().as_bytes().to_vec())
            .collect();
        assert_eq!(set.len(), 1000);
    }

    #[test]
    fn dummy_matches_real_length() {
        let mut v = Vault::new([1u8; 32], [2u8; 32], 32);
        let real = v
            .encrypt(&Record::Real(Element::new(5, [0xabu8; 32])))
            .unwrap();
        let dummy = v.encrypt(&Record::Dummy).unwrap();
        assert_eq!(real.len(), dummy.len());
        assert_eq!(real.len(), v.element_ciphertext_len());
        assert_eq!(v.decrypt(&dummy).unwrap(), Record::Dummy);
    }

    #[test]
    fn tampering_and_wrong_key_detected() {
        let mut v = vault();
        let c = v.encrypt(&Record::Real(Element::new(3, *b"C"))).unwrap();
        let mut bytes = c.as_bytes().to_vec();
        bytes[NONCE_LEN + 2] ^= 1;
        assert_eq!(
            v.decrypt(&Ciphertext::from_bytes(bytes)),
            Err(Error::Integrity)
        );

        let other = Vault::new([8u8; 32], [9u8; 32], 1);
        assert_eq!(other.decrypt(&c), Err(Error::Integrity));
        assert_eq!(
            v.open(&Ciphertext::from_bytes(vec![0u8; 5])),
            Err(Error::Integrity)
        );
    }

    #[test]
    fn wrong_payload_length_rejected() {
        let mut v = vault();
        let err = v
            .encrypt(&Record::Real(Element::new(1, *b"AB")))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn reads_and_writes_are_traced() {
        let mut v = vault();
        let mut mem = ExternalMemory::new();
        mem.allocate(Region::Output, 8);
        let c = v.seal_u64(5);
        mem.write(Region::Output, 5, Slot::single(c.clone()))
            .unwrap();
        assert_eq!(
            mem.trace().last(),
            Some(&AccessRecord::write(Region::Output, 5))
        );
        assert_eq!(mem.read(Region::Output, 5).unwrap(), Slot::single(c));
        assert_eq!(
            mem.trace().last(),
            Some(&AccessRecord::read(Region::Output, 5))
        );
        assert_eq!(mem.trace().len(), 2);
    }

    #[test]
    fn out_of_bounds_is_an_error_and_not_traced() {
        let mut mem = ExternalMemory::new();
        mem.allocate(Region::Dataset, 3);
        assert_eq!(
            mem.read(Region::Dataset, 3),
            Err(Error::OutOfBounds {
                region: Region::Dataset,
                index: 3,
                len: 3
            })
        );
        assert!(mem.trace().is_empty());
        // an unwritten slot is traced (the access happened) but errors
        assert_eq!(
            mem.read(Region::Dataset, 0),
            Err(Error::EmptySlot {
                region: Region::Dataset,
                index: 0
            })
        );
        assert_eq!(mem.trace().len(), 1);
    }

    #[test]
    fn canonical_form_and_phases() {
        let mut t = AccessTrace::new();
        t.begin_phase(Phase::FirstShuffle);
        t.push(AccessRecord::read(Region::Dataset, 0));
        t.begin_phase(Phase::Replication);
        t.push(AccessRecord::write(Region::Scratch, 12));
        t.push(AccessRecord::read(Region::Dataset, 1));
        assert_eq!(
            t.to_canonical_string(),
            "dataset\tread\t0\nscratch\twrite\t12\ndataset\tread\t1\n"
        );
        assert_eq!(t.phase_range(Phase::Replication), Some(1..3));
        assert_eq!(t.phase_records(Phase::FirstShuffle).len(), 1);
        assert_eq!(t.records_in(&[Phase::Replication]).len(), 2);
        assert!(t.phase_records(Phase::Reveal).is_empty());
    }

    #[test]
    fn private_memory_is_bounded() {
        let mut p = PrivateMemory::for_dataset(10);
        assert_eq!(p.capacity(), 4);
        p.reserve(3).unwrap();
        assert!(matches!(
            p.reserve(2),
            Err(Error::PrivateMemoryExceeded { .. })
        ));
        p.release(3);
        p.reserve(4).unwrap();
        assert_eq!(p.peak(), 4);
    }

    #[test]
    fn ceil_sqrt_exact() {
        for n in 0..2000usize {
            let r = ceil_sqrt(n);
            assert!(r * r >= n);
            assert!(r == 0 || (r - 1) * (r - 1) < n);
        }
    }
}
