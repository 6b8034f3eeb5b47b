use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GraphError;

/// Width of the binary index vector, in bits.
pub const INDEX_BITS: usize = 256;
const INDEX_BYTES: usize = INDEX_BITS / 8;

/// Fixed-width binary vector derived from a version digest.
///
/// The vector is the digest prefix, zero-padded when the digest is shorter
/// than [`INDEX_BITS`] (SHA-1 commit ids are 160 bits).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryIndex([u8; INDEX_BYTES]);

impl BinaryIndex {
    fn from_digest(digest: &[u8]) -> Self {
        let mut bytes = [0u8; INDEX_BYTES];
        let n = digest.len().min(INDEX_BYTES);
        bytes[..n].copy_from_slice(&digest[..n]);
        BinaryIndex(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; INDEX_BYTES] {
        &self.0
    }

    /// Bit `i`, most significant bit of the first byte first.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < INDEX_BITS, "bit index {i} out of range");
        self.0[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..INDEX_BITS).map(|i| self.bit(i))
    }
}

impl fmt::Debug for BinaryIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryIndex({})", hex_encode(&self.0))
    }
}

/// Identity of one code version: the backing commit digest plus its index
/// vector. Equality, hashing and ordering use the digest only.
#[derive(Clone)]
pub struct VersionId {
    digest: Arc<[u8]>,
    index: BinaryIndex,
}

impl VersionId {
    pub fn from_digest(digest: &[u8]) -> Result<Self, GraphError> {
        if digest.is_empty() {
            return Err(GraphError::EmptyDigest);
        }
        Ok(VersionId {
            digest: Arc::from(digest),
            index: BinaryIndex::from_digest(digest),
        })
    }

    pub fn from_hex(hex: &str) -> Result<Self, GraphError> {
        let bytes = hex_decode(hex).ok_or_else(|| GraphError::InvalidHex(hex.to_owned()))?;
        Self::from_digest(&bytes)
    }

    pub fn digest(&self) -> &[u8] {
        &self.digest
    }

    pub fn index(&self) -> &BinaryIndex {
        &self.index
    }

    pub fn to_hex(&self) -> String {
        hex_encode(&self.digest)
    }

    /// First seven hex characters, as Git abbreviates commit ids.
    pub fn short(&self) -> String {
        let mut hex = self.to_hex();
        hex.truncate(7);
        hex
    }
}

impl PartialEq for VersionId {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for VersionId {}

impl Hash for VersionId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.digest.hash(state);
    }
}

impl PartialOrd for VersionId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VersionId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.digest.cmp(&other.digest)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VersionId({})", self.short())
    }
}

impl FromStr for VersionId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for VersionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for VersionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        VersionId::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

fn hex_encode(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn hex_decode(hex: &str) -> Option<Vec<u8>> {
    if hex.len() % 2 != 0 || !hex.is_ascii() {
        return None;
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
        .collect()
}
