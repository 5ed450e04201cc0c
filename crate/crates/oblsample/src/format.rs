//! On-disk formats.
//!
//! Dataset file (`.obls`), little-endian:
//!
//! ```text
//! "OBLS" | version u8 = 1 | n u64 | record_size u32 | n × (key u64 | payload)
//! ```
//!
//! Ciphertext file (`.oblc`): a sequence of records of `parts` ciphertexts,
//! every part of fixed length.
//!
//! ```text
//! "OBLC" | version u8 = 1 | count u64 | parts u8 | parts × len u32 | count × parts × bytes
//! ```
//!
//! Trace file: one `region<TAB>op<TAB>index` line per access, LF endings.

use std::io::{self, BufRead, Read, Write};

use oblsample_core::memory::{AccessRecord, Ciphertext, Element, Op, Region};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"OBLS";
pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"OBLC";
pub const FORMAT_VERSION: u8 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => format_err(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut head = [0u8; 5];
    read_exact(r, &mut head, "header")?;
    if &head[..4] != magic {
        return Err(format_err(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&head[..4])
        )));
    }
    if head[4] != FORMAT_VERSION {
        return Err(format_err(format!("unsupported version {}", head[4])));
    }
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after the last record"));
    }
    Ok(())
}

/// A plaintext dataset with keys covering `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub record_size: usize,
    pub elements: Vec<Element>,
}

impl Dataset {
    pub fn new(record_size: usize, elements: Vec<Element>) -> Result<Self> {
        let d = Dataset {
            record_size,
            elements,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.elements.len();
        if n == 0 {
            return Err(format_err("dataset is empty"));
        }
        if self.record_size > u32::MAX as usize {
            return Err(format_err("record size does not fit in 32 bits"));
        }
        let mut seen = vec![false; n];
        for e in &self.elements {
            if e.key == 0 || e.key > n as u64 {
                return Err(format_err(format!("key {} outside [1, {n}]", e.key)));
            }
            if std::mem::replace(&mut seen[(e.key - 1) as usize], true) {
                return Err(format_err(format!("key {} appears twice", e.key)));
            }
            if e.payload.len() != self.record_size {
                return Err(format_err(format!(
                    "payload of key {} has {} bytes, record size is {}",
                    e.key,
                    e.payload.len(),
                    self.record_size
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&[FORMAT_VERSION])?;
        w.write_all(&(self.elements.len() as u64).to_le_bytes())?;
        w.write_all(&(self.record_size as u32).to_le_bytes())?;
        for e in &self.elements {
            w.write_all(&e.key.to_le_bytes())?;
            w.write_all(&e.payload)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_header(&mut r, DATASET_MAGIC)?;
        let n = read_u64(&mut r, "header")?;
        let record_size = read_u32(&mut r, "header")? as usize;
        if n == 0 {
            return Err(format_err("dataset is empty"));
        }
        let mut elements = Vec::with_capacity(n.min(1 << 24) as usize);
        for _ in 0..n {
            let key = read_u64(&mut r, "record")?;
            let mut payload = vec![0u8; record_size];
            read_exact(&mut r, &mut payload, "record")?;
            elements.push(Element { key, payload });
        }
        expect_eof(&mut r)?;
        Dataset::new(record_size, elements)
    }
}

/// Records of `parts` ciphertexts each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextFile {
    pub records: Vec<Vec<Ciphertext>>,
}

impl CiphertextFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let lens: Vec<usize> = match self.records.first() {
            Some(r) => r.iter().map(Ciphertext::len).collect(),
            None => Vec::new(),
        };
        if lens.len() > u8::MAX as usize {
            return Err(format_err("too many parts per record"));
        }
        for r in &self.records {
            if r.iter().map(Ciphertext::len).ne(lens.iter().copied()) {
                return Err(format_err("records differ in shape"));
            }
        }
        w.write_all(CIPHERTEXT_MAGIC)?;
        w.write_all(&[FORMAT_VERSION])?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&[lens.len() as u8])?;
        for &l in &lens {
            w.write_all(&(l as u32).to_le_bytes())?;
        }
        for r in &self.records {
            for c in r {
                w.write_all(c.as_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_header(&mut r, CIPHERTEXT_MAGIC)?;
        let count = read_u64(&mut r, "header")?;
        let mut parts = [0u8; 1];
        read_exact(&mut r, &mut parts, "header")?;
        let lens = (0..parts[0])
            .map(|_| read_u32(&mut r, "header").map(|l| l as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
        for _ in 0..count {
            let mut rec = Vec::with_capacity(lens.len());
            for &l in &lens {
                let mut b = vec![0u8; l];
                read_exact(&mut r, &mut b, "record")?;
                rec.push(Ciphertext::from_bytes(b));
            }
            records.push(rec);
        }
        expect_eof(&mut r)?;
        Ok(CiphertextFile { records })
    }
}

pub fn write_trace<W: Write>(records: &[AccessRecord], mut w: W) -> Result<()> {
    for r in records {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<AccessRecord>> {
    let mut out = Vec::new();
    for (no, line) in r.split(b'\n').enumerate() {
        let line = line?;
        let line = std::str::from_utf8(&line)
            .map_err(|_| format_err(format!("line {}: not UTF-8", no + 1)))?;
        let bad = || {
            format_err(format!(
                "line {}: expected region<TAB>op<TAB>index, got {line:?}",
                no + 1
            ))
        };
        let mut fields = line.split('\t');
        let (Some(region), Some(op), Some(index), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad());
        };
        let region = Region::from_name(region).ok_or_else(bad)?;
        let op = Op::from_name(op).ok_or_else(bad)?;
        if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let index = index.parse().map_err(|_| bad())?;
        out.push(AccessRecord { region, op, index });
    }
    Ok(out)
}

/// Public description of an SWO output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwoManifest {
    pub algorithm: String,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<u64>,
    pub sizes: Vec<u64>,
    pub k: usize,
    pub record_size: usize,
    pub files: Vec<String>,
}

/// Public description of a Poisson output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonManifest {
    pub algorithm: String,
    pub n: u64,
    pub gamma: f64,
    pub k: usize,
    pub record_size: usize,
    pub file: String,
}

/// Sample boundaries of a Poisson run. Secret: written only on explicit
/// request, for testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFile {
    pub samples: usize,
    pub sizes: Vec<u64>,
    pub real: u64,
}
