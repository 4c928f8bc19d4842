//! Mainnet account balances.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{IntertokenAmount, NativeAmount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acct#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{account} holds {available} {coin}, needs {required}")]
pub struct InsufficientBalance {
    pub account: AccountId,
    pub coin: &'static str,
    pub available: String,
    pub required: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallets {
    native: BTreeMap<AccountId, NativeAmount>,
    intertoken: BTreeMap<AccountId, IntertokenAmount>,
}

impl Wallets {
    pub fn native(&self, account: AccountId) -> NativeAmount {
        self.native.get(&account).copied().unwrap_or_default()
    }

    pub fn intertoken(&self, account: AccountId) -> IntertokenAmount {
        self.intertoken.get(&account).copied().unwrap_or_default()
    }

    pub fn credit_native(&mut self, account: AccountId, amount: NativeAmount) {
        *self.native.entry(account).or_default() += amount;
    }

    pub fn credit_intertoken(&mut self, account: AccountId, amount: IntertokenAmount) {
        *self.intertoken.entry(account).or_default() += amount;
    }

    pub fn debit_native(&mut self, account: AccountId, amount: NativeAmount) -> Result<(), InsufficientBalance> {
        let available = self.native(account);
        if available < amount {
            return Err(InsufficientBalance {
                account,
                coin: "native",
                available: available.to_string(),
                required: amount.to_string(),
            });
        }
        self.native.insert(account, available - amount);
        Ok(())
    }

    pub fn debit_intertoken(
        &mut self,
        account: AccountId,
        amount: IntertokenAmount,
    ) -> Result<(), InsufficientBalance> {
        let available = self.intertoken(account);
        if available < amount {
            return Err(InsufficientBalance {
                account,
                coin: "intertoken",
                available: available.to_string(),
                required: amount.to_string(),
            });
        }
        self.intertoken.insert(account, available - amount);
        Ok(())
    }

    pub fn total_native(&self) -> NativeAmount {
        self.native.values().copied().sum()
    }

    pub fn total_intertoken(&self) -> IntertokenAmount {
        self.intertoken.values().copied().sum()
    }
}
