//! Buyer and seller actions for one trade, and the market that runs many.
//!
//! A seller encrypts its data under a fresh key, stores the ciphertext,
//! encrypts the resulting address and proves the whole relation. The buyer
//! checks proofs (one aggregate check or one per offer), escrows payment,
//! and after settlement uses the revealed keys to fetch and decrypt data.

mod dataset;
mod market;

use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::crypto::{
    commit_key, decrypt, encrypt, Ciphertext, CryptoError, KeyCommitment, SymmetricKey,
};
use crate::ledger::{
    AccountId, ContractId, EntrySpec, EntryStatus, Ledger, LedgerError, LedgerMode, SubmitOutcome,
    Tokens,
};
use crate::metrics::{self, Cost};
use crate::proof::{
    AggregateProof, EvalRegistry, Proof, ProofBackend, ProofError, SellerStatement, SellerWitness,
};
use crate::store::{ContentHash, ContentStore, StoreError};

pub use dataset::{failing_dataset, passing_dataset};
pub use market::{
    buyer_account, check_fair_exchange, run_market, seller_account, Adversary, AdversaryMix,
    BuyerBatch, MarketReport, MarketRun, OfferRecord, Outcome, Totals, Violation, PHASES,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("seller data must not be empty")]
    EmptyData,
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("contract {0} still has funded entries before its deadline")]
    NotSettled(ContractId),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Offer bundle a seller hands to one buyer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SellerOffer {
    pub seller: AccountId,
    pub key_commitment: KeyCommitment,
    pub ciphertext: Ciphertext,
    pub content_hash: ContentHash,
    pub proof: Proof,
    pub eval_id: String,
    pub asking_price: Tokens,
}

impl SellerOffer {
    pub fn statement(&self) -> SellerStatement {
        SellerStatement {
            key_commitment: self.key_commitment,
            ciphertext: self.ciphertext.clone(),
            content_hash: self.content_hash,
            eval_id: self.eval_id.clone(),
        }
    }
}

/// An offer plus what the seller keeps private.
#[derive(Debug, Clone)]
pub struct PreparedOffer {
    pub offer: SellerOffer,
    pub witness: SellerWitness,
}

/// Seller side: encrypt and store `data`, encrypt the address, commit to the key
/// and prove the relation. The store holds `encrypt(key, data)`; the address
/// is the textual content hash of that ciphertext.
#[allow(clippy::too_many_arguments)]
pub fn seller_prepare(
    backend: &dyn ProofBackend,
    store: &ContentStore,
    registry: &EvalRegistry,
    seller: AccountId,
    data: &[u8],
    eval_id: &str,
    price: Tokens,
    rng: &mut impl RngCore,
) -> Result<PreparedOffer, ProtocolError> {
    let eval = registry.resolve(eval_id)?;
    if data.is_empty() {
        return Err(ProtocolError::EmptyData);
    }
    let key = SymmetricKey::random(rng);
    let payload = encrypt(&key, data, rng)?;
    let content_hash = store.put(&payload.to_bytes())?;
    let address = content_hash.to_string().into_bytes();
    let ciphertext = encrypt(&key, &address, rng)?;
    let stmt = SellerStatement {
        key_commitment: commit_key(&key),
        ciphertext,
        content_hash,
        eval_id: eval_id.to_owned(),
    };
    let witness = SellerWitness {
        data: data.to_vec(),
        key,
        address,
    };
    let proof = backend.prove(&stmt, &witness, &eval);
    Ok(PreparedOffer {
        offer: SellerOffer {
            seller,
            key_commitment: stmt.key_commitment,
            ciphertext: stmt.ciphertext,
            content_hash,
            proof,
            eval_id: stmt.eval_id,
            asking_price: price,
        },
        witness,
    })
}

/// Folds a batch of offers into one aggregate proof. Runs on the seller
/// side, not the buyer's.
pub fn aggregate_offers(
    backend: &dyn ProofBackend,
    offers: &[SellerOffer],
) -> Result<AggregateProof, ProofError> {
    let batch: Vec<_> = offers
        .iter()
        .map(|o| (o.statement(), o.proof.clone()))
        .collect();
    backend.aggregate(&batch)
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationMode {
    Individual,
    #[default]
    Aggregated,
}

impl std::str::FromStr for VerificationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "individual" => Ok(VerificationMode::Individual),
            "aggregated" => Ok(VerificationMode::Aggregated),
            other => Err(format!("unknown verification mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyCost {
    /// The aggregate check, or all individual checks in individual mode.
    pub primary: Cost,
    /// Individual re-verification after a failed aggregate check.
    pub fallback: Option<Cost>,
}

impl VerifyCost {
    pub fn total(&self) -> Cost {
        self.primary + self.fallback.unwrap_or_default()
    }
}

/// Partition of offers by proof validity, as indices into the input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOutcome {
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    pub cost: VerifyCost,
}

fn verify_each(backend: &dyn ProofBackend, offers: &[SellerOffer]) -> (Vec<usize>, Vec<usize>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (i, o) in offers.iter().enumerate() {
        if matches!(backend.verify(&o.statement(), &o.proof), Ok(true)) {
            accepted.push(i);
        } else {
            rejected.push(i);
        }
    }
    (accepted, rejected)
}

/// Buyer-side proof check. In aggregated mode a failing or missing aggregate falls back to
/// per-offer verification to find the culprits.
pub fn buyer_verify_offers(
    backend: &dyn ProofBackend,
    offers: &[SellerOffer],
    aggregate: Option<&AggregateProof>,
    mode: VerificationMode,
) -> VerifyOutcome {
    if offers.is_empty() {
        return VerifyOutcome::default();
    }
    match mode {
        VerificationMode::Individual => {
            let ((accepted, rejected), cost) = metrics::measure(|| verify_each(backend, offers));
            VerifyOutcome {
                accepted,
                rejected,
                cost: VerifyCost {
                    primary: cost,
                    fallback: None,
                },
            }
        }
        VerificationMode::Aggregated => {
            let (ok, primary) = metrics::measure(|| {
                let stmts: Vec<_> = offers.iter().map(SellerOffer::statement).collect();
                aggregate
                    .is_some_and(|agg| matches!(backend.verify_aggregate(&stmts, agg), Ok(true)))
            });
            if ok {
                return VerifyOutcome {
                    accepted: (0..offers.len()).collect(),
                    rejected: Vec::new(),
                    cost: VerifyCost {
                        primary,
                        fallback: None,
                    },
                };
            }
            let ((accepted, rejected), fallback) =
                metrics::measure(|| verify_each(backend, offers));
            VerifyOutcome {
                accepted,
                rejected,
                cost: VerifyCost {
                    primary,
                    fallback: Some(fallback),
                },
            }
        }
    }
}

/// Payment terms for the accepted offers.
#[derive(Debug, Clone)]
pub struct PurchaseOrder {
    pub buyer: AccountId,
    pub offers: Vec<SellerOffer>,
    pub amounts: Vec<Tokens>,
    pub deadline_blocks: u64,
    pub mode: LedgerMode,
}

impl PurchaseOrder {
    /// Pays every offer its asking price.
    pub fn at_asking_price(
        buyer: AccountId,
        offers: Vec<SellerOffer>,
        deadline_blocks: u64,
        mode: LedgerMode,
    ) -> Self {
        let amounts = offers.iter().map(|o| o.asking_price).collect();
        PurchaseOrder {
            buyer,
            offers,
            amounts,
            deadline_blocks,
            mode,
        }
    }
}

/// Escrows each offer's amount in one contract.
pub fn buyer_fund(ledger: &mut Ledger, order: &PurchaseOrder) -> Result<ContractId, ProtocolError> {
    if order.amounts.len() != order.offers.len() {
        return Err(ProtocolError::InvalidOrder("one amount per offer".into()));
    }
    if let Some(o) = order
        .offers
        .iter()
        .zip(&order.amounts)
        .find(|(o, &a)| a < o.asking_price)
    {
        return Err(ProtocolError::InvalidOrder(format!(
            "amount below asking price of {}",
            o.0.seller
        )));
    }
    let entries = order
        .offers
        .iter()
        .zip(&order.amounts)
        .map(|(o, &amount)| EntrySpec {
            seller: o.seller.clone(),
            key_commitment: o.key_commitment,
            ciphertext: o.ciphertext.clone(),
            amount,
        })
        .collect();
    let deadline = ledger.height() + order.deadline_blocks;
    Ok(ledger.deploy_escrow(&order.buyer, entries, deadline, order.mode)?)
}

/// Seller reveals its key to claim payment.
pub fn seller_claim(
    ledger: &mut Ledger,
    contract: ContractId,
    seller: &AccountId,
    key: &SymmetricKey,
) -> Result<SubmitOutcome, LedgerError> {
    ledger.submit_key(contract, seller, key)
}

/// Which of the buyer's post-payment checks failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrityStage {
    /// Revealed key does not open the address ciphertext to the advertised address.
    Address,
    /// No object under the content hash.
    Fetch,
    /// Stored bytes no longer hash to their name.
    Hash,
    /// Payload does not decrypt under the revealed key.
    Payload,
    /// Decrypted data fails `F`.
    Quality,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finalized {
    Delivered(Vec<u8>),
    Refunded,
    IntegrityFailure(IntegrityStage),
}

fn recover(
    store: &ContentStore,
    registry: &EvalRegistry,
    offer: &SellerOffer,
    key: &SymmetricKey,
) -> Result<Vec<u8>, IntegrityStage> {
    let address = decrypt(key, &offer.ciphertext).map_err(|_| IntegrityStage::Address)?;
    if address != offer.content_hash.to_string().as_bytes() {
        return Err(IntegrityStage::Address);
    }
    let payload = store.get(&offer.content_hash).map_err(|e| match e {
        StoreError::IntegrityFailure(_) => IntegrityStage::Hash,
        _ => IntegrityStage::Fetch,
    })?;
    let ct = Ciphertext::from_bytes(&payload).map_err(|_| IntegrityStage::Payload)?;
    let data = decrypt(key, &ct).map_err(|_| IntegrityStage::Payload)?;
    let quality = registry
        .resolve(&offer.eval_id)
        .is_ok_and(|f| f.evaluate(&data));
    if !quality {
        return Err(IntegrityStage::Quality);
    }
    Ok(data)
}

/// Buyer side, after claims. Refunds stragglers once the deadline has passed, then recovers
/// data for every paid entry using the key revealed on the ledger.
pub fn buyer_finalize(
    ledger: &mut Ledger,
    store: &ContentStore,
    registry: &EvalRegistry,
    contract: ContractId,
    offers: &[SellerOffer],
) -> Result<Vec<(AccountId, Finalized)>, ProtocolError> {
    let c = ledger
        .contract(contract)
        .ok_or(LedgerError::UnknownContract(contract))?;
    if c.escrowed() > 0 {
        if ledger.height() <= c.deadline {
            return Err(ProtocolError::NotSettled(contract));
        }
        ledger.refund_expired(contract)?;
    }
    let c = ledger.contract(contract).expect("present");
    let mut out = Vec::with_capacity(offers.len());
    for o in offers {
        let entry = c
            .entry(&o.seller)
            .ok_or_else(|| LedgerError::UnknownSeller(o.seller.clone()))?;
        let result = match entry.status {
            EntryStatus::Paid => {
                let key = ledger
                    .revealed_key(contract, &o.seller)
                    .expect("paid entries carry a key");
                match recover(store, registry, o, &key) {
                    Ok(data) => Finalized::Delivered(data),
                    Err(stage) => Finalized::IntegrityFailure(stage),
                }
            }
            EntryStatus::Refunded | EntryStatus::Funded => Finalized::Refunded,
        };
        out.push((o.seller.clone(), result));
    }
    Ok(out)
}

/// Shared handles a market run needs.
#[derive(Clone)]
pub struct MarketContext {
    pub store: Arc<ContentStore>,
    pub registry: EvalRegistry,
    pub backend: Arc<dyn ProofBackend>,
}

impl std::fmt::Debug for MarketContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarketContext")
            .field("store", &self.store)
            .finish_non_exhaustive()
    }
}

impl MarketContext {
    /// Reference backend over `store`, with its setup derived from `seed`.
    pub fn reference(store: Arc<ContentStore>, seed: u64) -> Self {
        let registry = EvalRegistry::new();
        let setup = crate::crypto::sha256(&[b"yotta/setup-seed/v1", &seed.to_le_bytes()]);
        let backend = crate::proof::ReferenceBackend::new(store.clone(), registry.clone(), setup);
        MarketContext {
            store,
            registry,
            backend: Arc::new(backend),
        }
    }
}
