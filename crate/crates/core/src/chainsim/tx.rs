//! Mainnet transactions offered to boosters for ordering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{GasAmount, NativeAmount, Ratio};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hash::{hash256, Hash256};
use crate::ledger::AccountId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Native in, intertoken out.
    BuyIntertoken,
    /// Intertoken in, native out.
    SellIntertoken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Exchange {
        direction: Direction,
        /// Inbound amount entering the curve, in the inbound coin's mantissa.
        volume_in: i128,
        ratio_min: Ratio,
        ratio_max: Ratio,
    },
    ProvideLiquidity {
        deposit: NativeAmount,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("ratio_min {min} exceeds ratio_max {max}")]
    InvertedBounds { min: Ratio, max: Ratio },
    #[error("volume must be positive")]
    NonPositiveVolume,
    #[error("gas limit must be positive")]
    NonPositiveGas,
    #[error("tx_hash {claimed} does not match contents ({actual})")]
    HashMismatch { claimed: Hash256, actual: Hash256 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MainnetTx {
    pub sender: AccountId,
    pub nonce: u64,
    pub gas_price: NativeAmount,
    pub gas_limit: GasAmount,
    pub kind: TxKind,
    pub tx_hash: Hash256,
}

impl MainnetTx {
    pub fn new(
        sender: AccountId,
        nonce: u64,
        gas_price: NativeAmount,
        gas_limit: GasAmount,
        kind: TxKind,
    ) -> Result<MainnetTx, TxError> {
        match &kind {
            TxKind::Exchange { volume_in, ratio_min, ratio_max, .. } => {
                if ratio_min > ratio_max {
                    return Err(TxError::InvertedBounds { min: *ratio_min, max: *ratio_max });
                }
                if *volume_in <= 0 {
                    return Err(TxError::NonPositiveVolume);
                }
            }
            TxKind::ProvideLiquidity { deposit } => {
                if !deposit.is_positive() {
                    return Err(TxError::NonPositiveVolume);
                }
            }
        }
        if !gas_limit.is_positive() {
            return Err(TxError::NonPositiveGas);
        }
        let mut tx = MainnetTx { sender, nonce, gas_price, gas_limit, kind, tx_hash: Hash256::ZERO };
        tx.tx_hash = tx.compute_hash();
        Ok(tx)
    }

    /// Returns a copy with a different nonce (and therefore a different hash).
    pub fn with_nonce(&self, nonce: u64) -> MainnetTx {
        let mut tx = self.clone();
        tx.nonce = nonce;
        tx.tx_hash = tx.compute_hash();
        tx
    }

    fn encode_body(&self, enc: &mut Encoder) {
        enc.u64(self.sender.0).u64(self.nonce).amount(self.gas_price).amount(self.gas_limit);
        match &self.kind {
            TxKind::Exchange { direction, volume_in, ratio_min, ratio_max } => {
                let dir = match direction {
                    Direction::BuyIntertoken => 0,
                    Direction::SellIntertoken => 1,
                };
                enc.u8(0).u8(dir).i128(*volume_in).ratio(*ratio_min).ratio(*ratio_max);
            }
            TxKind::ProvideLiquidity { deposit } => {
                enc.u8(1).amount(*deposit);
            }
        }
    }

    pub fn compute_hash(&self) -> Hash256 {
        let mut enc = Encoder::new();
        self.encode_body(&mut enc);
        hash256(&enc.finish())
    }

    pub fn is_exchange(&self) -> bool {
        matches!(self.kind, TxKind::Exchange { .. })
    }
}

impl Canonical for MainnetTx {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_body(enc);
        enc.hash(&self.tx_hash);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let sender = AccountId(dec.u64()?);
        let nonce = dec.u64()?;
        let gas_price = dec.amount()?;
        let gas_limit = dec.amount()?;
        let kind = match dec.u8()? {
            0 => {
                let direction = match dec.u8()? {
                    0 => Direction::BuyIntertoken,
                    1 => Direction::SellIntertoken,
                    tag => return Err(DecodeError::Tag { what: "direction", tag }),
                };
                TxKind::Exchange { direction, volume_in: dec.i128()?, ratio_min: dec.ratio()?, ratio_max: dec.ratio()? }
            }
            1 => TxKind::ProvideLiquidity { deposit: dec.amount()? },
            tag => return Err(DecodeError::Tag { what: "tx kind", tag }),
        };
        let tx_hash = dec.hash()?;
        let tx = MainnetTx { sender, nonce, gas_price, gas_limit, kind, tx_hash };
        if tx.compute_hash() != tx_hash {
            return Err(DecodeError::Invalid("tx_hash does not match contents".into()));
        }
        Ok(tx)
    }
}

#[derive(Deserialize)]
struct MainnetTxWire {
    sender: AccountId,
    nonce: u64,
    gas_price: NativeAmount,
    gas_limit: GasAmount,
    kind: TxKind,
    #[serde(default)]
    tx_hash: Option<Hash256>,
}

impl<'de> Deserialize<'de> for MainnetTx {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = MainnetTxWire::deserialize(deserializer)?;
        let tx = MainnetTx::new(wire.sender, wire.nonce, wire.gas_price, wire.gas_limit, wire.kind)
            .map_err(serde::de::Error::custom)?;
        match wire.tx_hash {
            Some(claimed) if claimed != tx.tx_hash => {
                Err(serde::de::Error::custom(TxError::HashMismatch { claimed, actual: tx.tx_hash }))
            }
            _ => Ok(tx),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exchange(volume: i128, min: i64, max: i64) -> TxKind {
        TxKind::Exchange {
            direction: Direction::BuyIntertoken,
            volume_in: volume,
            ratio_min: Ratio::from_int(min),
            ratio_max: Ratio::from_int(max),
        }
    }

    #[test]
    fn validation() {
        let gas = GasAmount::from_int(100_000);
        let price = NativeAmount::from_mantissa(1);
        assert!(MainnetTx::new(AccountId(1), 0, price, gas, exchange(1, 3, 2)).is_err());
        assert_eq!(MainnetTx::new(AccountId(1), 0, price, gas, exchange(0, 1, 2)), Err(TxError::NonPositiveVolume));
        assert_eq!(
            MainnetTx::new(AccountId(1), 0, price, GasAmount::ZERO, exchange(1, 1, 2)),
            Err(TxError::NonPositiveGas)
        );
    }

    #[test]
    fn json_rejects_tampered_hash() {
        let tx = MainnetTx::new(
            AccountId(3),
            9,
            NativeAmount::ULP,
            GasAmount::from_int(90_000),
            exchange(5, 1, 4),
        )
        .unwrap();
        let json = serde_json::to_string(&tx).unwrap();
        let back: MainnetTx = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tx);
        let tampered = json.replace("\"nonce\":9", "\"nonce\":10");
        assert!(serde_json::from_str::<MainnetTx>(&tampered).is_err());
    }

    fn arb_tx() -> impl Strategy<Value = MainnetTx> {
        (any::<u64>(), any::<u64>(), 1i64..1_000_000, 1i64..10_000_000, any::<bool>(), 1i128..(1 << 90), 0i64..1000, 0i64..1000)
            .prop_map(|(sender, nonce, price, gas, buy, vol, a, b)| {
                let kind = if vol % 7 == 0 {
                    TxKind::ProvideLiquidity { deposit: NativeAmount::from_mantissa(vol) }
                } else {
                    TxKind::Exchange {
                        direction: if buy { Direction::BuyIntertoken } else { Direction::SellIntertoken },
                        volume_in: vol,
                        ratio_min: Ratio::from_int(a.min(b)),
                        ratio_max: Ratio::from_int(a.max(b)),
                    }
                };
                MainnetTx::new(AccountId(sender), nonce, NativeAmount::from_mantissa(price as i128), GasAmount::from_int(gas), kind)
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn canonical_round_trip(tx in arb_tx()) {
            let bytes = tx.to_canonical();
            prop_assert_eq!(MainnetTx::from_canonical(&bytes).unwrap(), tx.clone());
            // rebuilding from the same fields reproduces the same hash
            let rebuilt = MainnetTx::new(tx.sender, tx.nonce, tx.gas_price, tx.gas_limit, tx.kind.clone()).unwrap();
            prop_assert_eq!(rebuilt.tx_hash, tx.tx_hash);
        }
    }
}
