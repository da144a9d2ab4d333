//! Transaction records and their newline-delimited JSON form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccountId, ContractId, EntryStatus, LedgerMode, Tokens};
use crate::crypto::{sha256, Ciphertext, CiphertextDigest, KeyCommitment};

const CHAIN_TAG: &[u8] = b"yotta/ledger/v1";

/// What the contract holds about the address ciphertext for one entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiphertextBinding {
    Digest(CiphertextDigest),
    Full(Ciphertext),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub seller: AccountId,
    pub key_commitment: KeyCommitment,
    pub binding: CiphertextBinding,
    pub amount: Tokens,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Paid { amount: Tokens },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TxBody {
    Genesis {
        balances: BTreeMap<AccountId, Tokens>,
    },
    DeployEscrow {
        contract: ContractId,
        buyer: AccountId,
        deadline: u64,
        mode: LedgerMode,
        entries: Vec<EntryRecord>,
    },
    SubmitKey {
        contract: ContractId,
        seller: AccountId,
        key: String,
        outcome: SubmitOutcome,
    },
    AdvanceBlocks {
        blocks: u64,
    },
    RefundExpired {
        contract: ContractId,
        refunded: Tokens,
    },
    /// Terminal record; nothing may follow it.
    Close {
        records: u64,
    },
}

impl TxBody {
    pub fn kind(&self) -> &'static str {
        match self {
            TxBody::Genesis { .. } => "genesis",
            TxBody::DeployEscrow { .. } => "deploy_escrow",
            TxBody::SubmitKey { .. } => "submit_key",
            TxBody::AdvanceBlocks { .. } => "advance_blocks",
            TxBody::RefundExpired { .. } => "refund_expired",
            TxBody::Close { .. } => "close",
        }
    }
}

/// One line of the ledger log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: u64,
    pub height: u64,
    #[serde(flatten)]
    pub body: TxBody,
    pub state_digest: String,
}

/// State touched by one transaction, committed into the digest chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub(crate) struct StateDelta {
    pub balances: BTreeMap<AccountId, Tokens>,
    pub entries: Vec<(ContractId, usize, EntryStatus)>,
    pub escrowed: Tokens,
    pub height: u64,
}

#[derive(Serialize)]
struct RecordCore<'a> {
    index: u64,
    height: u64,
    #[serde(flatten)]
    body: &'a TxBody,
}

/// `H(tag ‖ prev ‖ record ‖ delta)`.
pub(crate) fn chain_digest(
    prev: &[u8; 32],
    index: u64,
    height: u64,
    body: &TxBody,
    delta: &StateDelta,
) -> [u8; 32] {
    let core = serde_json::to_vec(&RecordCore {
        index,
        height,
        body,
    })
    .expect("serializable");
    let delta = serde_json::to_vec(delta).expect("serializable");
    sha256(&[CHAIN_TAG, prev, &core, &delta])
}

pub fn to_ndjson(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Parses a log; on failure returns the index of the first unreadable line.
pub fn parse_ndjson(text: &str) -> Result<Vec<LogRecord>, (u64, String)> {
    let mut out = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let rec: LogRecord = serde_json::from_str(line)
            .map_err(|e| (i as u64, format!("unreadable record: {e}")))?;
        out.push(rec);
    }
    Ok(out)
}
