//! Bit-exact payload layout.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "GBSD"
//!      4     1  version (1)
//!      5     8  ontology digest (FNV-1a-64, big-endian)
//!     13     2  N, node count
//!     15     2  d, attributes per node
//!     17     1  |R|, relation count
//!     18     1  K, retained matrices
//!     19     2  flags: bits 0..=2 tail pad bits for 6-bit symbols, rest 0
//!     21  K·N²  retained matrices, row-major, one octet per entry
//!      …  4·N·d feature matrix, f32 big-endian, row-major
//! ```
//!
//! All multi-octet integers are big-endian.

use super::{CompressedTensor, FeatureMatrix};
use crate::error::{Error, Result};
use crate::ontology::{RelationOntology, MAX_ATTRIBUTES, MAX_RELATIONS};
use crate::scene_graph::MAX_NODES;

pub const MAGIC: [u8; 4] = *b"GBSD";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 21;
pub const FLAGS_PAD_MASK: u16 = 0b111;

const OFF_VERSION: usize = 4;
const OFF_DIGEST: usize = 5;
const OFF_N: usize = 13;
const OFF_D: usize = 15;
const OFF_R: usize = 17;
const OFF_K: usize = 18;
const OFF_FLAGS: usize = 19;

/// Serialized frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Payload(Vec<u8>);

impl Payload {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for Payload {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Zero bits appended so `8·len` fills whole 6-bit 64-QAM symbols.
pub fn tail_pad_bits(len_octets: usize) -> u16 {
    ((6 - (len_octets * 8) % 6) % 6) as u16
}

/// `21 + K·N² + 4·N·d`, or `None` on overflow.
fn payload_len(n: usize, d: usize, k: usize) -> Option<usize> {
    let matrices = n.checked_mul(n)?.checked_mul(k)?;
    let features = n.checked_mul(d)?.checked_mul(4)?;
    HEADER_LEN.checked_add(matrices)?.checked_add(features)
}

pub fn serialize(c: &CompressedTensor, f: &FeatureMatrix, o: &RelationOntology) -> Result<Payload> {
    let n = c.n();
    let d = f.cols();
    let k = c.retained().len();
    if n > MAX_NODES {
        return Err(Error::Capacity(format!("{n} nodes > {MAX_NODES}")));
    }
    if c.num_relations() > MAX_RELATIONS || k > MAX_RELATIONS {
        return Err(Error::Capacity(format!(
            "{} relations / {k} matrices > {MAX_RELATIONS}",
            c.num_relations()
        )));
    }
    if d > MAX_ATTRIBUTES {
        return Err(Error::Capacity(format!(
            "{d} attributes > {MAX_ATTRIBUTES}"
        )));
    }
    if n == 0 {
        return Err(Error::Shape(
            "cannot serialize a graph without nodes".into(),
        ));
    }
    if f.rows() != n {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for {n} nodes",
            f.rows()
        )));
    }
    if c.num_relations() != o.num_relations() || d != o.num_attributes() {
        return Err(Error::OntologyMismatch(format!(
            "payload shape |R|={}, d={d} vs ontology |R|={}, d={}",
            c.num_relations(),
            o.num_relations(),
            o.num_attributes()
        )));
    }

    let total = payload_len(n, d, k).ok_or_else(|| Error::Capacity("payload too large".into()))?;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&o.digest().0);
    out.extend_from_slice(&(n as u16).to_be_bytes());
    out.extend_from_slice(&(d as u16).to_be_bytes());
    out.push(c.num_relations() as u8);
    out.push(k as u8);
    out.extend_from_slice(&tail_pad_bits(total).to_be_bytes());
    for m in c.retained() {
        out.extend_from_slice(m);
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    debug_assert_eq!(out.len(), total);
    Ok(Payload(out))
}

/// Total over arbitrary input: returns the decoded parts or a typed error
/// carrying the offending byte offset.
pub fn parse(bytes: &[u8], o: &RelationOntology) -> Result<(CompressedTensor, FeatureMatrix)> {
    if let Some(i) = (0..MAGIC.len().min(bytes.len())).find(|&i| bytes[i] != MAGIC[i]) {
        return Err(Error::Format {
            offset: i,
            msg: "bad magic".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncation {
            offset: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    if bytes[OFF_VERSION] != VERSION {
        return Err(Error::Format {
            offset: OFF_VERSION,
            msg: format!("unsupported version {}", bytes[OFF_VERSION]),
        });
    }
    if bytes[OFF_DIGEST..OFF_N] != o.digest().0 {
        return Err(Error::WireOntologyMismatch {
            offset: OFF_DIGEST,
            msg: "ontology digest differs from the local ontology".into(),
        });
    }
    let be16 = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]) as usize;
    let n = be16(OFF_N);
    let d = be16(OFF_D);
    let num_rel = bytes[OFF_R] as usize;
    let k = bytes[OFF_K] as usize;
    let flags = be16(OFF_FLAGS) as u16;

    if n == 0 {
        return Err(Error::Format {
            offset: OFF_N,
            msg: "zero nodes".into(),
        });
    }
    if d != o.num_attributes() {
        return Err(Error::WireOntologyMismatch {
            offset: OFF_D,
            msg: format!("d = {d}, ontology declares {}", o.num_attributes()),
        });
    }
    if num_rel != o.num_relations() {
        return Err(Error::WireOntologyMismatch {
            offset: OFF_R,
            msg: format!("|R| = {num_rel}, ontology declares {}", o.num_relations()),
        });
    }
    if k > num_rel {
        return Err(Error::Format {
            offset: OFF_K,
            msg: format!("{k} retained matrices for {num_rel} relations"),
        });
    }
    let total = payload_len(n, d, k).ok_or(Error::Format {
        offset: OFF_N,
        msg: "declared size overflows".into(),
    })?;
    if flags & !FLAGS_PAD_MASK != 0 || flags != tail_pad_bits(total) {
        return Err(Error::Format {
            offset: OFF_FLAGS,
            msg: format!("invalid flags {flags:#06x}"),
        });
    }
    if bytes.len() < total {
        return Err(Error::Truncation {
            offset: bytes.len(),
            expected: total,
        });
    }
    if bytes.len() > total {
        return Err(Error::Format {
            offset: total,
            msg: format!("{} trailing bytes", bytes.len() - total),
        });
    }

    let nn = n * n;
    let body = &bytes[HEADER_LEN..];
    let retained = body[..k * nn].chunks(nn).map(<[u8]>::to_vec).collect();
    let features = body[k * nn..]
        .chunks_exact(4)
        .map(|b| f32::from_bits(u32::from_be_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Ok((
        CompressedTensor::from_raw(n, num_rel, retained)?,
        FeatureMatrix::new(n, d, features)?,
    ))
}
