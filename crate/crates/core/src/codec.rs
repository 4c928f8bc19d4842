//! Canonical byte encoding: fixed field order, big-endian integers,
//! `u32` length prefixes on variable-length byte fields.

use thiserror::Error;

use crate::amount::{Amount, Ratio, Unit};
use crate::hash::Hash256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Eof(usize),
    #[error("unknown tag {tag} for {what}")]
    Tag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i128(&mut self, v: i128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn amount<U: Unit>(&mut self, v: Amount<U>) -> &mut Self {
        self.i128(v.mantissa())
    }

    pub fn ratio(&mut self, v: Ratio) -> &mut Self {
        self.i128(v.mantissa())
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.buf.extend_from_slice(&h.0);
        self
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(data.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(data);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Decoder { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or(DecodeError::Eof(self.pos))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i128(&mut self) -> Result<i128, DecodeError> {
        Ok(i128::from_be_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub fn amount<U: Unit>(&mut self) -> Result<Amount<U>, DecodeError> {
        self.i128().map(Amount::from_mantissa)
    }

    pub fn ratio(&mut self) -> Result<Ratio, DecodeError> {
        self.i128().map(Ratio::from_mantissa)
    }

    pub fn hash(&mut self) -> Result<Hash256, DecodeError> {
        Ok(Hash256(self.take(32)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

/// Types with a canonical, hash-stable byte form.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_canonical(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let value = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}
