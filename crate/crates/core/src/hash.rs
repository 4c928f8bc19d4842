//! 256-bit digests and the bit-indexing convention used by forging.
//!
//! Bit index `b` addresses bit `7 - b % 8` of byte `b / 8`: index 0 is the
//! most significant bit of the first byte and index 255 the least
//! significant bit of the last byte.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const HASH_BITS: usize = 256;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash256(pub [u8; 32]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashParseError {
    #[error("expected 64 hex characters, got {0}")]
    Length(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// SHA-256 of `data`.
pub fn hash256(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_concat(parts: &[&[u8]]) -> Hash256 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Hash256(hasher.finalize().into())
}

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Bit at `index` (0..256), MSB-first.
    pub fn bit(&self, index: usize) -> u8 {
        assert!(index < HASH_BITS, "bit index {index} out of range");
        (self.0[index / 8] >> (7 - index % 8)) & 1
    }

    pub fn set_bit(&mut self, index: usize, value: u8) {
        assert!(index < HASH_BITS, "bit index {index} out of range");
        let mask = 1u8 << (7 - index % 8);
        if value & 1 == 1 {
            self.0[index / 8] |= mask;
        } else {
            self.0[index / 8] &= !mask;
        }
    }

    pub fn first_bit(&self) -> u8 {
        self.bit(0)
    }

    pub fn last_bit(&self) -> u8 {
        self.bit(HASH_BITS - 1)
    }

    /// The first `count` bits packed MSB-first into an integer.
    pub fn leading_bits(&self, count: usize) -> u32 {
        (0..count).fold(0, |acc, i| (acc << 1) | self.bit(i) as u32)
    }

    /// The last `count` bits packed in index order into an integer.
    pub fn trailing_bits(&self, count: usize) -> u32 {
        (HASH_BITS - count..HASH_BITS).fold(0, |acc, i| (acc << 1) | self.bit(i) as u32)
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..HASH_BITS).map(move |i| self.bit(i))
    }

    /// Reassembles a hash from up to 256 bits; missing trailing bits are zero.
    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Hash256 {
        let mut out = Hash256::ZERO;
        for (i, b) in bits.into_iter().take(HASH_BITS).enumerate() {
            out.set_bit(i, b);
        }
        out
    }

    /// Keeps the first `count` bits and zeroes the rest.
    pub fn truncated(&self, count: usize) -> Hash256 {
        Hash256::from_bits(self.bits().take(count))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Hash256, HashParseError> {
        let text = text.trim().trim_start_matches("0x");
        if text.len() != 64 {
            return Err(HashParseError::Length(text.len()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(text, &mut out).map_err(|e| HashParseError::Hex(e.to_string()))?;
        Ok(Hash256(out))
    }
}

impl AsRef<[u8]> for Hash256 {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", &self.to_hex()[..16])
    }
}

impl FromStr for Hash256 {
    type Err = HashParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Hash256::from_hex(s)
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Hash256::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_digest() {
        let h = hash256(b"");
        assert_eq!(h.to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        // 0xe3 = 1110_0011, 0x55 = 0101_0101
        assert_eq!(h.first_bit(), 1);
        assert_eq!(h.bit(3), 0);
        assert_eq!(h.last_bit(), 1);
        assert_eq!(h.leading_bits(4), 0b1110);
        assert_eq!(h.trailing_bits(3), 0b101);
    }

    #[test]
    fn distinct_inputs_distinct_digests() {
        let corpus: Vec<&[u8]> = vec![b"", b"a", b"b", b"ab", b"ba", b"interpool", b"\0", b"\0\0"];
        for (i, x) in corpus.iter().enumerate() {
            for (j, y) in corpus.iter().enumerate() {
                assert_eq!(hash256(x) == hash256(y), i == j);
            }
        }
        assert_eq!(hash_concat(&[b"ab", b"c"]), hash256(b"abc"));
    }

    #[test]
    fn hex_round_trip_and_errors() {
        let h = hash256(b"x");
        assert_eq!(Hash256::from_hex(&h.to_hex()).unwrap(), h);
        assert_eq!(Hash256::from_hex("00"), Err(HashParseError::Length(2)));
        assert!(Hash256::from_hex(&"zz".repeat(32)).is_err());
        assert_eq!(serde_json::to_string(&Hash256::ZERO).unwrap(), format!("\"{}\"", "0".repeat(64)));
    }

    proptest! {
        #[test]
        fn bits_reassemble(bytes in proptest::array::uniform32(any::<u8>())) {
            let h = Hash256(bytes);
            prop_assert_eq!(Hash256::from_bits(h.bits()), h);
        }

        #[test]
        fn truncation_keeps_prefix(bytes in proptest::array::uniform32(any::<u8>()), n in 0usize..=256) {
            let h = Hash256(bytes);
            let t = h.truncated(n);
            for i in 0..256 {
                prop_assert_eq!(t.bit(i), if i < n { h.bit(i) } else { 0 });
            }
        }
    }
}
