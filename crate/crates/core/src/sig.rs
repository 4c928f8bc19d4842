//! Simulation signature scheme.
//!
//! A signature is `hash256(secret ‖ message)` and a public key is
//! `hash256(secret)`. Verification needs the secret, so verifiers consult a
//! [`KeyRegistry`] held by the simulator. Anything implementing [`Verifier`]
//! can stand in for a real scheme.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::{hash256, hash_concat, Hash256};

pub type Signature = Hash256;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub pubkey: Hash256,
    secret: [u8; 32],
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair").field("pubkey", &self.pubkey).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_secret(secret: [u8; 32]) -> KeyPair {
        KeyPair { pubkey: hash256(&secret), secret }
    }

    /// Deterministic key for simulation actors, derived from a label.
    pub fn derive(label: &str) -> KeyPair {
        KeyPair::from_secret(hash_concat(&[b"interpool-key:", label.as_bytes()]).0)
    }

    pub fn secret(&self) -> &[u8; 32] {
        &self.secret
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.secret, message)
    }
}

pub fn sign(secret: &[u8; 32], message: &[u8]) -> Signature {
    hash_concat(&[secret, message])
}

pub trait Verifier {
    fn verify(&self, pubkey: &Hash256, message: &[u8], signature: &Signature) -> bool;
}

/// pubkey → secret map for the keyed-hash scheme.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    secrets: BTreeMap<Hash256, [u8; 32]>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &KeyPair) {
        self.secrets.insert(key.pubkey, key.secret);
    }

    pub fn contains(&self, pubkey: &Hash256) -> bool {
        self.secrets.contains_key(pubkey)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }
}

impl Verifier for KeyRegistry {
    fn verify(&self, pubkey: &Hash256, message: &[u8], signature: &Signature) -> bool {
        match self.secrets.get(pubkey) {
            Some(secret) => hash256(secret) == *pubkey && sign(secret, message) == *signature,
            None => false,
        }
    }
}
