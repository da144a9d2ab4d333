//! Seller statements, proofs and batch aggregation.
//!
//! A seller proves that it holds the data and key behind a public
//! [`SellerStatement`]: the key matches the commitment, the ciphertext
//! decrypts to the address, the address names the stored payload, the
//! payload decrypts to the data, and the data satisfies the buyer's
//! evaluation function. [`ProofBackend`] is the pluggable proving system;
//! [`ReferenceBackend`] is the in-crate implementation.

mod eval;
mod reference;

use thiserror::Error;

use crate::crypto::{sha256, Ciphertext, KeyCommitment, SymmetricKey};
use crate::store::ContentHash;

pub use eval::{builtin_eval, EvalFunction, EvalRegistry};
pub use reference::{ReferenceBackend, REFERENCE_ATTESTATION_BYTES, REFERENCE_BACKEND_ID};

const STATEMENT_TAG: &[u8] = b"yotta/statement/v1";
const PROOF_MAGIC: &[u8; 4] = b"YPF1";
const AGGREGATE_MAGIC: &[u8; 4] = b"YPA1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("malformed proof: {0}")]
    MalformedProof(&'static str),
    #[error("cannot aggregate an empty batch")]
    EmptyBatch,
    #[error("batch mixes proof backends")]
    MixedBackends,
    #[error("aggregate covers {expected} statements, got {got}")]
    CountMismatch { expected: u32, got: usize },
    #[error("unknown evaluation function {0:?}")]
    UnknownEval(String),
}

/// Public half of the seller's claim. Contains no secrets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SellerStatement {
    pub key_commitment: KeyCommitment,
    pub ciphertext: Ciphertext,
    pub content_hash: ContentHash,
    pub eval_id: String,
}

impl SellerStatement {
    pub fn digest(&self) -> [u8; 32] {
        self.digest_for_eval(&self.eval_id)
    }

    pub(crate) fn digest_for_eval(&self, eval_id: &str) -> [u8; 32] {
        let ct = self.ciphertext.to_bytes();
        sha256(&[
            STATEMENT_TAG,
            self.key_commitment.as_bytes(),
            &(ct.len() as u32).to_be_bytes(),
            &ct,
            self.content_hash.as_bytes(),
            &(eval_id.len() as u32).to_be_bytes(),
            eval_id.as_bytes(),
        ])
    }
}

/// Secret half: data, key and address.
#[derive(Clone)]
pub struct SellerWitness {
    pub data: Vec<u8>,
    pub key: SymmetricKey,
    pub address: Vec<u8>,
}

impl std::fmt::Debug for SellerWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SellerWitness(..)")
    }
}

/// Opaque attestation for one statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub backend_id: u8,
    pub attestation: Vec<u8>,
}

impl Proof {
    /// `"YPF1" ‖ backend_id ‖ u32be(len) ‖ attestation`.
    pub fn encode(&self) -> Vec<u8> {
        envelope(PROOF_MAGIC, self.backend_id, None, &self.attestation)
    }

    pub fn decode(bytes: &[u8]) -> Result<Proof, ProofError> {
        let (backend_id, _, attestation) = open_envelope(PROOF_MAGIC, false, bytes)?;
        Ok(Proof {
            backend_id,
            attestation,
        })
    }

    pub fn size_bytes(&self) -> usize {
        4 + 1 + 4 + self.attestation.len()
    }
}

/// One attestation standing for `count` statements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateProof {
    pub backend_id: u8,
    pub attestation: Vec<u8>,
    pub count: u32,
}

impl AggregateProof {
    /// `"YPA1" ‖ backend_id ‖ u32be(count) ‖ u32be(len) ‖ attestation`.
    pub fn encode(&self) -> Vec<u8> {
        envelope(
            AGGREGATE_MAGIC,
            self.backend_id,
            Some(self.count),
            &self.attestation,
        )
    }

    pub fn decode(bytes: &[u8]) -> Result<AggregateProof, ProofError> {
        let (backend_id, count, attestation) = open_envelope(AGGREGATE_MAGIC, true, bytes)?;
        Ok(AggregateProof {
            backend_id,
            attestation,
            count: count.unwrap_or(0),
        })
    }

    pub fn size_bytes(&self) -> usize {
        4 + 1 + 4 + 4 + self.attestation.len()
    }
}

fn envelope(magic: &[u8; 4], id: u8, count: Option<u32>, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + body.len());
    out.extend_from_slice(magic);
    out.push(id);
    if let Some(c) = count {
        out.extend_from_slice(&c.to_be_bytes());
    }
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

fn open_envelope(
    magic: &[u8; 4],
    with_count: bool,
    bytes: &[u8],
) -> Result<(u8, Option<u32>, Vec<u8>), ProofError> {
    let header = if with_count { 13 } else { 9 };
    if bytes.len() < header {
        return Err(ProofError::MalformedProof("truncated envelope"));
    }
    if &bytes[..4] != magic {
        return Err(ProofError::MalformedProof("bad magic"));
    }
    let id = bytes[4];
    let mut at = 5;
    let count = if with_count {
        let c = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        at += 4;
        Some(c)
    } else {
        None
    };
    let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    at += 4;
    if bytes.len() - at != len {
        return Err(ProofError::MalformedProof("length prefix mismatch"));
    }
    Ok((id, count, bytes[at..].to_vec()))
}

/// A proving system for seller statements.
///
/// `prove` never fails: a false statement yields a proof that does not
/// verify. `verify_aggregate` must agree with the conjunction of `verify`
/// over the batch.
pub trait ProofBackend: Send + Sync {
    fn backend_id(&self) -> u8;

    fn prove(&self, stmt: &SellerStatement, wit: &SellerWitness, eval: &EvalFunction) -> Proof;

    fn verify(&self, stmt: &SellerStatement, proof: &Proof) -> Result<bool, ProofError>;

    fn aggregate(&self, batch: &[(SellerStatement, Proof)]) -> Result<AggregateProof, ProofError>;

    fn verify_aggregate(
        &self,
        stmts: &[SellerStatement],
        agg: &AggregateProof,
    ) -> Result<bool, ProofError>;
}
