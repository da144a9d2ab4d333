//! TOML scenario files for market runs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{LedgerMode, Tokens};
use crate::proof::EvalRegistry;
use crate::protocol::VerificationMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Percentages of participants per misbehaviour. Counts are
/// `floor(pct * n / 100)`; each seller gets at most one role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryMix {
    /// Sellers that reveal a key other than the committed one.
    pub wrong_key: u32,
    /// Sellers whose data fails the buyer's evaluation function.
    pub failing_f: u32,
    /// Sellers that attach another seller's proof.
    pub proof_replay: u32,
    /// Sellers whose stored payload is altered before the buyer verifies.
    pub store_tamper: u32,
    /// Sellers that never reveal a key.
    pub non_claimer: u32,
    /// Buyers that verify but never fund.
    pub non_funding_buyer: u32,
}

impl AdversaryMix {
    pub fn seller_total(&self) -> u32 {
        self.wrong_key + self.failing_f + self.proof_replay + self.store_tamper + self.non_claimer
    }
}

fn default_price() -> Tokens {
    10
}
fn default_deadline() -> u64 {
    5
}
fn default_item_bytes() -> usize {
    256
}
fn default_evals() -> Vec<String> {
    vec!["schema:csv:f64x3".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub buyers: usize,
    pub sellers: usize,
    /// Asking price of seller 0.
    #[serde(default = "default_price")]
    pub price: Tokens,
    /// Added to the asking price per seller index.
    #[serde(default)]
    pub price_step: Tokens,
    /// Starting balance per buyer; defaults to exactly what buying every
    /// offer costs.
    #[serde(default)]
    pub buyer_budget: Option<Tokens>,
    #[serde(default = "default_deadline")]
    pub deadline_blocks: u64,
    #[serde(default)]
    pub ledger_mode: LedgerMode,
    #[serde(default)]
    pub verify_mode: VerificationMode,
    #[serde(default = "default_item_bytes")]
    pub item_bytes: usize,
    /// Buyer `b` uses `evals[b % evals.len()]`.
    #[serde(default = "default_evals")]
    pub evals: Vec<String>,
    #[serde(default)]
    pub adversary: AdversaryMix,
}

impl ScenarioConfig {
    /// All-honest scenario with defaults for everything else.
    pub fn honest(seed: u64, buyers: usize, sellers: usize) -> Self {
        ScenarioConfig {
            seed,
            buyers,
            sellers,
            price: default_price(),
            price_step: 0,
            buyer_budget: None,
            deadline_blocks: default_deadline(),
            ledger_mode: LedgerMode::default(),
            verify_mode: VerificationMode::default(),
            item_bytes: default_item_bytes(),
            evals: default_evals(),
            adversary: AdversaryMix::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn asking_price(&self, seller: usize) -> Tokens {
        self.price + self.price_step * seller as Tokens
    }

    /// Cost of buying every offer.
    pub fn full_basket(&self) -> Tokens {
        (0..self.sellers).map(|s| self.asking_price(s)).sum()
    }

    pub fn budget(&self) -> Tokens {
        self.buyer_budget.unwrap_or_else(|| self.full_basket())
    }

    pub fn eval_for(&self, buyer: usize) -> &str {
        &self.evals[buyer % self.evals.len()]
    }

    pub fn validate(&self, registry: &EvalRegistry) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.buyers == 0 || self.sellers == 0 {
            return bad("buyers and sellers must be at least 1".into());
        }
        if self.price == 0 {
            return bad("price must be positive".into());
        }
        if self.deadline_blocks == 0 {
            return bad("deadline_blocks must be at least 1".into());
        }
        if self.item_bytes == 0 {
            return bad("item_bytes must be positive".into());
        }
        if self.evals.is_empty() {
            return bad("evals must name at least one function".into());
        }
        for id in &self.evals {
            if registry.resolve(id).is_err() {
                return bad(format!("unknown evaluation function {id:?}"));
            }
        }
        let a = &self.adversary;
        if a.seller_total() > 100 || a.non_funding_buyer > 100 {
            return bad("adversary percentages exceed 100".into());
        }
        if a.proof_replay > 0 && self.sellers < 2 {
            return bad("proof_replay needs at least two sellers".into());
        }
        if self.budget() < self.full_basket() {
            return bad(format!(
                "buyer_budget {} below basket cost {}",
                self.budget(),
                self.full_basket()
            ));
        }
        Ok(())
    }
}
