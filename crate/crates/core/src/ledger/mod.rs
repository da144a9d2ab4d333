//! Deterministic simulated chain with the escrow contract.
//!
//! Every state change is a [`TxBody`] applied through one function, both
//! live and during [`replay`], so a log reproduces the state that wrote it.
//! Each record carries a digest chained over the previous digest, the record
//! itself and the state it touched.

mod log;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{commit_key, decrypt, Ciphertext, KeyCommitment, SymmetricKey};

use log::{chain_digest, StateDelta};
pub use log::{
    parse_ndjson, to_ndjson, CiphertextBinding, EntryRecord, LogRecord, SubmitOutcome, TxBody,
};

pub type Tokens = u64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn new(s: impl Into<String>) -> Self {
        AccountId(s.into())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "contract-{}", self.0)
    }
}

/// How `submit_key` decides whether a revealed key is the right one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LedgerMode {
    /// Only `commit_key(K)` equal to the stored commitment; the contract keeps a digest of the address ciphertext.
    #[default]
    CommitmentOnly,
    /// Additionally `K` must authenticate-decrypt the stored address ciphertext.
    FullDecrypt,
}

impl std::str::FromStr for LedgerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "commitment-only" => Ok(LedgerMode::CommitmentOnly),
            "full-decrypt" => Ok(LedgerMode::FullDecrypt),
            other => Err(format!("unknown ledger mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Funded,
    Paid,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowEntry {
    pub seller: AccountId,
    pub key_commitment: KeyCommitment,
    pub binding: CiphertextBinding,
    pub amount: Tokens,
    pub status: EntryStatus,
    pub revealed_key: Option<[u8; 32]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowContract {
    pub id: ContractId,
    pub buyer: AccountId,
    pub entries: Vec<EscrowEntry>,
    pub deadline: u64,
    pub mode: LedgerMode,
}

impl EscrowContract {
    /// Tokens still held for `Funded` entries.
    pub fn escrowed(&self) -> Tokens {
        self.entries
            .iter()
            .filter(|e| e.status == EntryStatus::Funded)
            .map(|e| e.amount)
            .sum()
    }

    pub fn entry(&self, seller: &AccountId) -> Option<&EscrowEntry> {
        self.entries.iter().find(|e| &e.seller == seller)
    }
}

/// Input to [`Ledger::deploy_escrow`].
#[derive(Debug, Clone)]
pub struct EntrySpec {
    pub seller: AccountId,
    pub key_commitment: KeyCommitment,
    pub ciphertext: Ciphertext,
    pub amount: Tokens,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("insufficient funds: need {need}, have {have}")]
    InsufficientFunds { need: Tokens, have: Tokens },
    #[error("deadline {deadline} is not after current height {height}")]
    PastDeadline { deadline: u64, height: u64 },
    #[error("escrow needs at least one entry")]
    EmptyEntries,
    #[error("entry amounts must be at least 1")]
    ZeroAmount,
    #[error("seller {0} appears twice in one contract")]
    DuplicateSeller(AccountId),
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("seller {0} has no entry in this contract")]
    UnknownSeller(AccountId),
    #[error("entry already settled")]
    AlreadySettled,
    #[error("deadline {deadline} passed at height {height}")]
    DeadlinePassed { deadline: u64, height: u64 },
    #[error("deadline {deadline} not reached at height {height}")]
    DeadlineNotReached { deadline: u64, height: u64 },
    #[error("must advance by at least one block")]
    ZeroBlocks,
    #[error("ledger is closed")]
    Closed,
    #[error("corrupt log at record {index}: {reason}")]
    CorruptLog { index: u64, reason: String },
}

/// Balances, height and contracts. Compared by deep equality after replay.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub balances: BTreeMap<AccountId, Tokens>,
    pub height: u64,
    pub contracts: BTreeMap<ContractId, EscrowContract>,
    pub genesis_total: Tokens,
    pub closed: bool,
}

impl LedgerState {
    pub fn balance(&self, account: &AccountId) -> Tokens {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn escrowed(&self) -> Tokens {
        self.contracts.values().map(EscrowContract::escrowed).sum()
    }

    /// `Σ balances + Σ escrowed == genesis total`.
    pub fn is_conserved(&self) -> bool {
        let held: Tokens = self.balances.values().sum();
        held.checked_add(self.escrowed()) == Some(self.genesis_total)
    }

    /// Every `Paid` entry carries a revealed key that opens its commitment.
    pub fn revealed_keys_sound(&self) -> bool {
        self.contracts
            .values()
            .flat_map(|c| &c.entries)
            .all(|e| match e.status {
                EntryStatus::Paid => e
                    .revealed_key
                    .is_some_and(|k| commit_key(&SymmetricKey::from_bytes(k)) == e.key_commitment),
                _ => true,
            })
    }

    fn credit(&mut self, account: &AccountId, amount: Tokens, delta: &mut StateDelta) {
        let bal = self.balances.entry(account.clone()).or_insert(0);
        *bal += amount;
        delta.balances.insert(account.clone(), *bal);
    }

    fn contract_mut(&mut self, id: ContractId) -> Result<&mut EscrowContract, LedgerError> {
        self.contracts
            .get_mut(&id)
            .ok_or(LedgerError::UnknownContract(id))
    }

    /// Checks a candidate key against one entry, without mutating.
    fn judge_key(
        &self,
        id: ContractId,
        seller: &AccountId,
        key: &SymmetricKey,
    ) -> Result<SubmitOutcome, LedgerError> {
        let c = self
            .contracts
            .get(&id)
            .ok_or(LedgerError::UnknownContract(id))?;
        let e = c
            .entry(seller)
            .ok_or_else(|| LedgerError::UnknownSeller(seller.clone()))?;
        if e.status != EntryStatus::Funded {
            return Err(LedgerError::AlreadySettled);
        }
        if self.height > c.deadline {
            return Err(LedgerError::DeadlinePassed {
                deadline: c.deadline,
                height: self.height,
            });
        }
        if commit_key(key) != e.key_commitment {
            return Ok(SubmitOutcome::Rejected {
                reason: "commitment mismatch".into(),
            });
        }
        if let (LedgerMode::FullDecrypt, CiphertextBinding::Full(ct)) = (c.mode, &e.binding) {
            if decrypt(key, ct).is_err() {
                return Ok(SubmitOutcome::Rejected {
                    reason: "decryption failed".into(),
                });
            }
        }
        Ok(SubmitOutcome::Paid { amount: e.amount })
    }

    /// The single state-transition function. Validates fully before it
    /// mutates, so an error leaves the state untouched.
    fn apply(&mut self, body: &TxBody) -> Result<StateDelta, LedgerError> {
        if self.closed {
            return Err(LedgerError::Closed);
        }
        let mut delta = StateDelta::default();
        match body {
            TxBody::Genesis { balances } => {
                if !self.balances.is_empty()
                    || !self.contracts.is_empty()
                    || self.genesis_total != 0
                {
                    return Err(LedgerError::CorruptLog {
                        index: 0,
                        reason: "second genesis".into(),
                    });
                }
                self.genesis_total = balances.values().sum();
                self.balances = balances.clone();
                delta.balances = balances.clone();
            }
            TxBody::DeployEscrow {
                contract,
                buyer,
                deadline,
                mode,
                entries,
            } => {
                if entries.is_empty() {
                    return Err(LedgerError::EmptyEntries);
                }
                if entries.iter().any(|e| e.amount == 0) {
                    return Err(LedgerError::ZeroAmount);
                }
                if *deadline <= self.height {
                    return Err(LedgerError::PastDeadline {
                        deadline: *deadline,
                        height: self.height,
                    });
                }
                let mut seen = std::collections::BTreeSet::new();
                for e in entries {
                    if !seen.insert(&e.seller) {
                        return Err(LedgerError::DuplicateSeller(e.seller.clone()));
                    }
                    let ok = matches!(
                        (mode, &e.binding),
                        (LedgerMode::CommitmentOnly, CiphertextBinding::Digest(_))
                            | (LedgerMode::FullDecrypt, CiphertextBinding::Full(_))
                    );
                    if !ok {
                        return Err(LedgerError::CorruptLog {
                            index: 0,
                            reason: "binding does not match mode".into(),
                        });
                    }
                }
                let expected = ContractId(self.contracts.len() as u64);
                if *contract != expected {
                    return Err(LedgerError::CorruptLog {
                        index: 0,
                        reason: format!("contract id {contract} out of sequence"),
                    });
                }
                let need = entries
                    .iter()
                    .try_fold(0u64, |acc, e| acc.checked_add(e.amount))
                    .ok_or(LedgerError::InsufficientFunds {
                        need: u64::MAX,
                        have: 0,
                    })?;
                let have = self.balance(buyer);
                if have < need {
                    return Err(LedgerError::InsufficientFunds { need, have });
                }
                let bal = self.balances.entry(buyer.clone()).or_insert(0);
                *bal -= need;
                delta.balances.insert(buyer.clone(), *bal);
                let c = EscrowContract {
                    id: *contract,
                    buyer: buyer.clone(),
                    deadline: *deadline,
                    mode: *mode,
                    entries: entries
                        .iter()
                        .map(|e| EscrowEntry {
                            seller: e.seller.clone(),
                            key_commitment: e.key_commitment,
                            binding: e.binding.clone(),
                            amount: e.amount,
                            status: EntryStatus::Funded,
                            revealed_key: None,
                        })
                        .collect(),
                };
                for i in 0..c.entries.len() {
                    delta.entries.push((*contract, i, EntryStatus::Funded));
                }
                self.contracts.insert(*contract, c);
            }
            TxBody::SubmitKey {
                contract,
                seller,
                key,
                outcome,
            } => {
                let raw = hex::decode(key)
                    .ok()
                    .and_then(|v| <[u8; 32]>::try_from(v).ok())
                    .ok_or_else(|| LedgerError::CorruptLog {
                        index: 0,
                        reason: "key encoding".into(),
                    })?;
                let judged = self.judge_key(*contract, seller, &SymmetricKey::from_bytes(raw))?;
                if &judged != outcome {
                    return Err(LedgerError::CorruptLog {
                        index: 0,
                        reason: format!("recorded outcome {outcome:?}, replay gives {judged:?}"),
                    });
                }
                if let SubmitOutcome::Paid { amount } = judged {
                    let c = self.contract_mut(*contract)?;
                    let idx = c
                        .entries
                        .iter()
                        .position(|e| &e.seller == seller)
                        .expect("judged");
                    let e = &mut c.entries[idx];
                    e.status = EntryStatus::Paid;
                    e.revealed_key = Some(raw);
                    delta.entries.push((*contract, idx, EntryStatus::Paid));
                    self.credit(seller, amount, &mut delta);
                }
            }
            TxBody::AdvanceBlocks { blocks } => {
                if *blocks == 0 {
                    return Err(LedgerError::ZeroBlocks);
                }
                self.height += blocks;
            }
            TxBody::RefundExpired { contract, refunded } => {
                let height = self.height;
                let c = self.contract_mut(*contract)?;
                if height <= c.deadline {
                    return Err(LedgerError::DeadlineNotReached {
                        deadline: c.deadline,
                        height,
                    });
                }
                let total = c.escrowed();
                if total != *refunded {
                    return Err(LedgerError::CorruptLog {
                        index: 0,
                        reason: format!("recorded refund {refunded}, replay gives {total}"),
                    });
                }
                for (i, e) in c.entries.iter_mut().enumerate() {
                    if e.status == EntryStatus::Funded {
                        e.status = EntryStatus::Refunded;
                        delta.entries.push((*contract, i, EntryStatus::Refunded));
                    }
                }
                let buyer = c.buyer.clone();
                if total > 0 {
                    self.credit(&buyer, total, &mut delta);
                }
            }
            TxBody::Close { .. } => {
                self.closed = true;
            }
        }
        delta.escrowed = self.escrowed();
        delta.height = self.height;
        Ok(delta)
    }
}

/// Live ledger: state plus the ordered log that produced it.
#[derive(Debug, Clone)]
pub struct Ledger {
    state: LedgerState,
    log: Vec<LogRecord>,
    head: [u8; 32],
}

impl Ledger {
    /// Starts a chain whose first record mints `balances`.
    pub fn genesis(balances: impl IntoIterator<Item = (AccountId, Tokens)>) -> Self {
        let mut l = Ledger {
            state: LedgerState::default(),
            log: Vec::new(),
            head: [0u8; 32],
        };
        l.commit(TxBody::Genesis {
            balances: balances.into_iter().collect(),
        })
        .expect("genesis applies to an empty ledger");
        l
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.state.height
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn contract(&self, id: ContractId) -> Option<&EscrowContract> {
        self.state.contracts.get(&id)
    }

    pub fn to_ndjson(&self) -> String {
        to_ndjson(&self.log)
    }

    fn commit(&mut self, body: TxBody) -> Result<&LogRecord, LedgerError> {
        let delta = self.state.apply(&body)?;
        debug_assert!(self.state.is_conserved());
        let index = self.log.len() as u64;
        let digest = chain_digest(&self.head, index, self.state.height, &body, &delta);
        self.head = digest;
        self.log.push(LogRecord {
            index,
            height: self.state.height,
            body,
            state_digest: hex::encode(digest),
        });
        Ok(self.log.last().expect("pushed"))
    }

    pub fn deploy_escrow(
        &mut self,
        buyer: &AccountId,
        entries: Vec<EntrySpec>,
        deadline: u64,
        mode: LedgerMode,
    ) -> Result<ContractId, LedgerError> {
        let contract = ContractId(self.state.contracts.len() as u64);
        let entries = entries
            .into_iter()
            .map(|e| EntryRecord {
                seller: e.seller,
                key_commitment: e.key_commitment,
                binding: match mode {
                    LedgerMode::CommitmentOnly => CiphertextBinding::Digest(e.ciphertext.digest()),
                    LedgerMode::FullDecrypt => CiphertextBinding::Full(e.ciphertext),
                },
                amount: e.amount,
            })
            .collect();
        self.commit(TxBody::DeployEscrow {
            contract,
            buyer: buyer.clone(),
            deadline,
            mode,
            entries,
        })?;
        Ok(contract)
    }

    /// Key reveal. A rejected key is logged and leaves the entry funded.
    pub fn submit_key(
        &mut self,
        contract: ContractId,
        seller: &AccountId,
        key: &SymmetricKey,
    ) -> Result<SubmitOutcome, LedgerError> {
        if self.state.closed {
            return Err(LedgerError::Closed);
        }
        let outcome = self.state.judge_key(contract, seller, key)?;
        self.commit(TxBody::SubmitKey {
            contract,
            seller: seller.clone(),
            key: hex::encode(key.reveal()),
            outcome: outcome.clone(),
        })?;
        Ok(outcome)
    }

    pub fn advance_blocks(&mut self, blocks: u64) -> Result<u64, LedgerError> {
        self.commit(TxBody::AdvanceBlocks { blocks })?;
        Ok(self.state.height)
    }

    /// Refunds every still-funded entry once the deadline has passed.
    /// A second call refunds 0 and appends nothing.
    pub fn refund_expired(&mut self, contract: ContractId) -> Result<Tokens, LedgerError> {
        if self.state.closed {
            return Err(LedgerError::Closed);
        }
        let c = self
            .state
            .contracts
            .get(&contract)
            .ok_or(LedgerError::UnknownContract(contract))?;
        if self.state.height <= c.deadline {
            return Err(LedgerError::DeadlineNotReached {
                deadline: c.deadline,
                height: self.state.height,
            });
        }
        let refunded = c.escrowed();
        if refunded == 0 {
            return Ok(0);
        }
        self.commit(TxBody::RefundExpired { contract, refunded })?;
        Ok(refunded)
    }

    /// Appends the terminal record. Further mutations fail with `Closed`.
    pub fn close(&mut self) -> Result<(), LedgerError> {
        let records = self.log.len() as u64;
        self.commit(TxBody::Close { records })?;
        Ok(())
    }

    /// Revealed key for a paid entry, read from chain state.
    pub fn revealed_key(&self, contract: ContractId, seller: &AccountId) -> Option<SymmetricKey> {
        self.contract(contract)?
            .entry(seller)?
            .revealed_key
            .map(SymmetricKey::from_bytes)
    }
}

fn corrupt(index: u64, reason: impl Into<String>) -> LedgerError {
    LedgerError::CorruptLog {
        index,
        reason: reason.into(),
    }
}

/// Rebuilds state from genesis, checking each record's index, height,
/// digest and post-state conservation.
pub fn replay(log: &[LogRecord]) -> Result<LedgerState, LedgerError> {
    let mut state = LedgerState::default();
    let mut head = [0u8; 32];
    for (i, rec) in log.iter().enumerate() {
        let i = i as u64;
        if rec.index != i {
            return Err(corrupt(i, format!("index {} out of sequence", rec.index)));
        }
        if (i == 0) != matches!(rec.body, TxBody::Genesis { .. }) {
            return Err(corrupt(i, "genesis must be exactly the first record"));
        }
        if let TxBody::Close { records } = rec.body {
            if records != i {
                return Err(corrupt(i, "close record count mismatch"));
            }
        }
        let delta = state.apply(&rec.body).map_err(|e| match e {
            LedgerError::CorruptLog { reason, .. } => corrupt(i, reason),
            other => corrupt(i, other.to_string()),
        })?;
        if state.height != rec.height {
            return Err(corrupt(i, "height mismatch"));
        }
        if !state.is_conserved() {
            return Err(corrupt(i, "token conservation violated"));
        }
        let digest = chain_digest(&head, i, rec.height, &rec.body, &delta);
        if hex::encode(digest) != rec.state_digest {
            return Err(corrupt(i, "state digest mismatch"));
        }
        head = digest;
    }
    Ok(state)
}

/// Parses and replays a complete log, which must end with a close record.
pub fn verify_log(text: &str) -> Result<LedgerState, LedgerError> {
    let records = parse_ndjson(text).map_err(|(index, reason)| corrupt(index, reason))?;
    let state = replay(&records)?;
    if !state.closed {
        return Err(corrupt(
            records.len() as u64,
            "log ends without a close record",
        ));
    }
    Ok(state)
}
