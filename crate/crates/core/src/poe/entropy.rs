//! Number of admissible orderings of a balanced batch and its entropy.
//!
//! With `k = 2^locked_digits` equally sized bit classes, `n` transactions and
//! `h` constrained prefix positions (h/k per class):
//! `Ω = [(n/k)! / ((n−h)/k)!]^k · (n−h)!`.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error("locked_digits {0} too large")]
    LockedDigits(u32),
    #[error("k = {k} must divide n = {n}")]
    BatchNotDivisible { n: u64, k: u64 },
    #[error("k = {k} must divide hash_bits = {hash_bits}")]
    HashBitsNotDivisible { hash_bits: u64, k: u64 },
    #[error("hash_bits {hash_bits} exceeds n = {n}")]
    HashBitsTooLarge { hash_bits: u64, n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub n: u64,
    pub locked_digits: u32,
    pub hash_bits: u64,
}

impl EntropyParams {
    pub fn new(n: u64, locked_digits: u32, hash_bits: u64) -> EntropyParams {
        EntropyParams { n, locked_digits, hash_bits }
    }

    pub fn k(&self) -> Result<u64, EntropyError> {
        if self.locked_digits >= 32 {
            return Err(EntropyError::LockedDigits(self.locked_digits));
        }
        Ok(1u64 << self.locked_digits)
    }

    pub fn validate(&self) -> Result<u64, EntropyError> {
        let k = self.k()?;
        let (n, h) = (self.n, self.hash_bits);
        if n % k != 0 {
            return Err(EntropyError::BatchNotDivisible { n, k });
        }
        if h % k != 0 {
            return Err(EntropyError::HashBitsNotDivisible { hash_bits: h, k });
        }
        if h > n {
            return Err(EntropyError::HashBitsTooLarge { hash_bits: h, n });
        }
        Ok(k)
    }
}

/// `from · (from−1) ⋯ (to+1)`.
fn falling(from: u64, to: u64) -> BigUint {
    (to + 1..=from).fold(BigUint::from(1u32), |acc, v| acc * v)
}

pub fn count_orderings(p: &EntropyParams) -> Result<BigUint, EntropyError> {
    let k = p.validate()?;
    let per_class = falling(p.n / k, (p.n - p.hash_bits) / k);
    let rest = falling(p.n - p.hash_bits, 0);
    Ok(per_class.pow(k as u32) * rest)
}

/// log₂ Ω via log-gamma, usable far beyond where Ω fits in a float.
pub fn entropy(p: &EntropyParams) -> Result<f64, EntropyError> {
    let k = p.validate()?;
    let ln_fact = |x: u64| if x < 2 { 0.0 } else { ln_gamma(x as f64 + 1.0) };
    let free = p.n - p.hash_bits;
    let ln = k as f64 * (ln_fact(p.n / k) - ln_fact(free / k)) + ln_fact(free);
    Ok(ln / std::f64::consts::LN_2)
}
