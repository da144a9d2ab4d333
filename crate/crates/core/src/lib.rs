//! Fair data exchange between one buyer and many sellers.
//!
//! Sellers publish encrypted data in a content-addressed store, prove in
//! zero knowledge that it meets the buyer's evaluation function, and are
//! paid through an escrow contract when they reveal the committed key.
//! A pairwise Diffie-Hellman exchange serves as the comparison baseline.

pub mod baseline;
pub mod config;
pub mod crypto;
pub mod ledger;
pub mod metrics;
pub mod proof;
pub mod protocol;
pub mod store;
pub mod sweep;

pub use config::{AdversaryMix, ConfigError, ScenarioConfig};
pub use crypto::{Ciphertext, CryptoError, KeyCommitment, SymmetricKey};
pub use ledger::{AccountId, ContractId, Ledger, LedgerError, LedgerMode, Tokens};
pub use metrics::{Cost, OpCounts};
pub use proof::{
    AggregateProof, EvalFunction, EvalRegistry, Proof, ProofBackend, ProofError, ReferenceBackend,
};
pub use protocol::{MarketContext, MarketReport, ProtocolError, SellerOffer, VerificationMode};
pub use store::{ContentHash, ContentStore, StoreError};
