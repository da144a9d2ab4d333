//! Commit-and-recheck reference backend.
//!
//! A proof seals the constant-size part of the witness (key, data digest,
//! address) under the backend's setup key, with the statement digest as
//! associated data. Verification unseals it and re-executes every clause of
//! the relation against the public statement and the content store. No
//! zero-knowledge is provided: whoever holds the setup key sees the key.
//!
//! Aggregation plays the role of the recursive prover. It verifies each
//! constituent, then signs a hash chain over the statement digests together
//! with the conjunction of the results. Checking an aggregate costs one
//! hash-chain pass plus a single two-exponentiation signature check,
//! independent of payload sizes.

use std::sync::Arc;

use super::{
    AggregateProof, EvalFunction, EvalRegistry, Proof, ProofBackend, ProofError, SellerStatement,
    SellerWitness,
};
use crate::crypto::{
    commit_key, decrypt, decrypt_with_aad, encrypt_with_aad, sha256, Ciphertext, FixedNonce,
    SchnorrSignature, SigningKey, SymmetricKey, KEY_BYTES, NONCE_BYTES, TAG_BYTES,
};
use crate::metrics;
use crate::store::{ContentStore, CID_TEXT_LEN};

pub const REFERENCE_BACKEND_ID: u8 = 0x01;

const SEAL_KEY_TAG: &[u8] = b"yotta/setup/seal/v1";
const SIGN_KEY_TAG: &[u8] = b"yotta/setup/sign/v1";
const SEAL_NONCE_TAG: &[u8] = b"yotta/seal-nonce/v1";
const DATA_DIGEST_TAG: &[u8] = b"yotta/data/v1";
const TRANSCRIPT_TAG: &[u8] = b"yotta/aggregate/v1";

const ADDRESS_OVERFLOW: u8 = 0xff;
const SEALED_BYTES: usize = KEY_BYTES + 32 + 1 + CID_TEXT_LEN;

/// Attestation length of every reference proof, whatever the dataset size.
pub const REFERENCE_ATTESTATION_BYTES: usize = NONCE_BYTES + SEALED_BYTES + TAG_BYTES;

const AGGREGATE_ATTESTATION_BYTES: usize = 1 + SchnorrSignature::BYTES;

pub struct ReferenceBackend {
    store: Arc<ContentStore>,
    registry: EvalRegistry,
    seal_key: SymmetricKey,
    signer: SigningKey,
}

impl std::fmt::Debug for ReferenceBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceBackend")
            .field("store", &self.store)
            .finish_non_exhaustive()
    }
}

fn data_digest(data: &[u8]) -> [u8; 32] {
    sha256(&[DATA_DIGEST_TAG, data])
}

impl ReferenceBackend {
    pub fn new(store: Arc<ContentStore>, registry: EvalRegistry, setup_seed: [u8; 32]) -> Self {
        let seal_key = SymmetricKey::from_bytes(sha256(&[SEAL_KEY_TAG, &setup_seed]));
        let signer = SigningKey::from_seed(&sha256(&[SIGN_KEY_TAG, &setup_seed]));
        ReferenceBackend {
            store,
            registry,
            seal_key,
            signer,
        }
    }

    pub fn store(&self) -> &Arc<ContentStore> {
        &self.store
    }

    pub fn registry(&self) -> &EvalRegistry {
        &self.registry
    }

    fn recheck(&self, stmt: &SellerStatement, proof: &Proof) -> Result<bool, ProofError> {
        if proof.backend_id != REFERENCE_BACKEND_ID {
            return Err(ProofError::MalformedProof("foreign backend"));
        }
        if proof.attestation.len() != REFERENCE_ATTESTATION_BYTES {
            return Err(ProofError::MalformedProof("attestation length"));
        }
        let sealed = Ciphertext::from_bytes(&proof.attestation)
            .map_err(|_| ProofError::MalformedProof("attestation layout"))?;
        let Ok(opened) = decrypt_with_aad(&self.seal_key, &sealed, &stmt.digest()) else {
            return Ok(false);
        };
        let (key, rest) = opened.split_at(KEY_BYTES);
        let (digest, rest) = rest.split_at(32);
        let (addr_len, addr) = (rest[0], &rest[1..]);
        if addr_len == ADDRESS_OVERFLOW || addr_len as usize > CID_TEXT_LEN {
            return Ok(false);
        }
        let address = &addr[..addr_len as usize];
        let key = SymmetricKey::from_slice(key).expect("fixed width");

        if commit_key(&key) != stmt.key_commitment {
            return Ok(false);
        }
        match decrypt(&key, &stmt.ciphertext) {
            Ok(a) if a == address => {}
            _ => return Ok(false),
        }
        if address != stmt.content_hash.to_string().as_bytes() {
            return Ok(false);
        }
        let Ok(payload) = self.store.get(&stmt.content_hash) else {
            return Ok(false);
        };
        let Ok(payload_ct) = Ciphertext::from_bytes(&payload) else {
            return Ok(false);
        };
        let Ok(data) = decrypt(&key, &payload_ct) else {
            return Ok(false);
        };
        if data_digest(&data) != digest {
            return Ok(false);
        }
        Ok(self
            .registry
            .resolve(&stmt.eval_id)
            .is_ok_and(|f| f.evaluate(&data)))
    }

    fn transcript(stmts: &[SellerStatement]) -> [u8; 32] {
        let mut t = sha256(&[TRANSCRIPT_TAG, &(stmts.len() as u64).to_be_bytes()]);
        for s in stmts {
            t = sha256(&[&t, &s.digest()]);
        }
        t
    }

    fn aggregate_message(transcript: &[u8; 32], count: u32, verdict: u8) -> Vec<u8> {
        let mut m = Vec::with_capacity(TRANSCRIPT_TAG.len() + 37);
        m.extend_from_slice(TRANSCRIPT_TAG);
        m.extend_from_slice(&count.to_be_bytes());
        m.extend_from_slice(transcript);
        m.push(verdict);
        m
    }
}

impl ProofBackend for ReferenceBackend {
    fn backend_id(&self) -> u8 {
        REFERENCE_BACKEND_ID
    }

    fn prove(&self, stmt: &SellerStatement, wit: &SellerWitness, eval: &EvalFunction) -> Proof {
        // Bound to the evaluation function the prover ran, so a proof made
        // for a different F fails to unseal against this statement.
        let aad = stmt.digest_for_eval(eval.id());
        let digest = data_digest(&wit.data);
        let mut sealed = Vec::with_capacity(SEALED_BYTES);
        sealed.extend_from_slice(wit.key.reveal());
        sealed.extend_from_slice(&digest);
        let mut addr = [0u8; CID_TEXT_LEN];
        if wit.address.len() <= CID_TEXT_LEN {
            sealed.push(wit.address.len() as u8);
            addr[..wit.address.len()].copy_from_slice(&wit.address);
        } else {
            sealed.push(ADDRESS_OVERFLOW);
        }
        sealed.extend_from_slice(&addr);

        let nonce_seed = sha256(&[SEAL_NONCE_TAG, &aad, wit.key.reveal(), &digest]);
        let nonce: [u8; NONCE_BYTES] = nonce_seed[..NONCE_BYTES].try_into().unwrap();
        let ct = encrypt_with_aad(&self.seal_key, &sealed, &aad, &mut FixedNonce(nonce))
            .expect("sealed witness is non-empty");
        Proof {
            backend_id: REFERENCE_BACKEND_ID,
            attestation: ct.to_bytes(),
        }
    }

    fn verify(&self, stmt: &SellerStatement, proof: &Proof) -> Result<bool, ProofError> {
        metrics::record_verify();
        self.recheck(stmt, proof)
    }

    fn aggregate(&self, batch: &[(SellerStatement, Proof)]) -> Result<AggregateProof, ProofError> {
        if batch.is_empty() {
            return Err(ProofError::EmptyBatch);
        }
        if batch
            .iter()
            .any(|(_, p)| p.backend_id != REFERENCE_BACKEND_ID)
        {
            return Err(ProofError::MixedBackends);
        }
        let count = u32::try_from(batch.len()).map_err(|_| ProofError::MalformedProof("batch"))?;
        let mut all = true;
        for (s, p) in batch {
            all &= matches!(self.verify(s, p), Ok(true));
        }
        let verdict = u8::from(all);
        let stmts: Vec<SellerStatement> = batch.iter().map(|(s, _)| s.clone()).collect();
        let msg = Self::aggregate_message(&Self::transcript(&stmts), count, verdict);
        let sig = self.signer.sign(&msg);
        let mut attestation = Vec::with_capacity(AGGREGATE_ATTESTATION_BYTES);
        attestation.push(verdict);
        attestation.extend_from_slice(&sig.to_bytes());
        Ok(AggregateProof {
            backend_id: REFERENCE_BACKEND_ID,
            attestation,
            count,
        })
    }

    fn verify_aggregate(
        &self,
        stmts: &[SellerStatement],
        agg: &AggregateProof,
    ) -> Result<bool, ProofError> {
        metrics::record_verify();
        if agg.backend_id != REFERENCE_BACKEND_ID {
            return Err(ProofError::MalformedProof("foreign backend"));
        }
        if stmts.len() != agg.count as usize {
            return Err(ProofError::CountMismatch {
                expected: agg.count,
                got: stmts.len(),
            });
        }
        if agg.attestation.len() != AGGREGATE_ATTESTATION_BYTES {
            return Err(ProofError::MalformedProof("aggregate attestation length"));
        }
        let verdict = agg.attestation[0];
        let sig = SchnorrSignature::from_bytes(&agg.attestation[1..])
            .map_err(|_| ProofError::MalformedProof("signature"))?;
        let msg = Self::aggregate_message(&Self::transcript(stmts), agg.count, verdict);
        Ok(self.signer.verifying_key().verify(&msg, &sig) && verdict == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt, gen_key};
    use crate::metrics::measure;
    use crate::proof::builtin_eval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        backend: ReferenceBackend,
        rng: ChaCha20Rng,
    }

    impl Fixture {
        fn new() -> Self {
            let store = Arc::new(ContentStore::in_memory());
            Fixture {
                backend: ReferenceBackend::new(store, EvalRegistry::new(), [3u8; 32]),
                rng: ChaCha20Rng::seed_from_u64(99),
            }
        }

        fn offer(&mut self, data: &[u8], idx: u64) -> (SellerStatement, SellerWitness) {
            let key = gen_key(1, idx);
            let payload = encrypt(&key, data, &mut self.rng).unwrap();
            let cid = self.backend.store.put(&payload.to_bytes()).unwrap();
            let address = cid.to_string().into_bytes();
            let ciphertext = encrypt(&key, &address, &mut self.rng).unwrap();
            let stmt = SellerStatement {
                key_commitment: commit_key(&key),
                ciphertext,
                content_hash: cid,
                eval_id: "schema:csv:f64x3".into(),
            };
            (
                stmt,
                SellerWitness {
                    data: data.to_vec(),
                    key,
                    address,
                },
            )
        }

        fn prove(&self, stmt: &SellerStatement, wit: &SellerWitness) -> Proof {
            self.backend
                .prove(stmt, wit, &builtin_eval(&stmt.eval_id).unwrap())
        }
    }

    #[test]
    fn honest_proof_verifies() {
        let mut fx = Fixture::new();
        let (stmt, wit) = fx.offer(b"1,2,3\n", 0);
        let proof = fx.prove(&stmt, &wit);
        assert_eq!(proof.attestation.len(), REFERENCE_ATTESTATION_BYTES);
        assert_eq!(fx.backend.verify(&stmt, &proof), Ok(true));
    }

    #[test]
    fn wrong_key_or_failing_data_rejected() {
        let mut fx = Fixture::new();
        let (stmt, mut wit) = fx.offer(b"1,2,3\n", 0);
        wit.key = gen_key(1, 77);
        assert_eq!(fx.backend.verify(&stmt, &fx.prove(&stmt, &wit)), Ok(false));

        let bad = b"not,numbers\n";
        assert!(!builtin_eval("schema:csv:f64x3").unwrap().evaluate(bad));
        let (stmt, wit) = fx.offer(bad, 1);
        assert_eq!(fx.backend.verify(&stmt, &fx.prove(&stmt, &wit)), Ok(false));
    }

    #[test]
    fn proof_for_other_eval_does_not_transfer() {
        let mut fx = Fixture::new();
        let (stmt, wit) = fx.offer(b"1,2,3\n", 0);
        let proof = fx
            .backend
            .prove(&stmt, &wit, &builtin_eval("min-records:1").unwrap());
        assert_eq!(fx.backend.verify(&stmt, &proof), Ok(false));
    }

    #[test]
    fn replay_and_bit_flips_rejected() {
        let mut fx = Fixture::new();
        let (s1, w1) = fx.offer(b"1,2,3\n", 0);
        let (s2, _) = fx.offer(b"4,5,6\n", 1);
        let p1 = fx.prove(&s1, &w1);
        assert_eq!(fx.backend.verify(&s2, &p1), Ok(false));
        for i in 0..p1.attestation.len() {
            let mut bad = p1.clone();
            bad.attestation[i] ^= 0x10;
            assert_eq!(fx.backend.verify(&s1, &bad), Ok(false), "byte {i}");
        }
        let short = Proof {
            backend_id: 1,
            attestation: vec![0; 5],
        };
        assert!(matches!(
            fx.backend.verify(&s1, &short),
            Err(ProofError::MalformedProof(_))
        ));
    }

    #[test]
    fn tampered_store_rejected() {
        let mut fx = Fixture::new();
        let (stmt, wit) = fx.offer(b"1,2,3\n", 0);
        let proof = fx.prove(&stmt, &wit);
        fx.backend
            .store
            .tamper(&stmt.content_hash, b"other")
            .unwrap();
        assert_eq!(fx.backend.verify(&stmt, &proof), Ok(false));
    }

    #[test]
    fn aggregate_cost_is_constant_in_exponentiations() {
        let mut fx = Fixture::new();
        let batch: Vec<_> = (0..8)
            .map(|i| {
                let (s, w) = fx.offer(format!("{i},1,2\n").as_bytes(), i);
                let p = fx.prove(&s, &w);
                (s, p)
            })
            .collect();
        let agg = fx.backend.aggregate(&batch).unwrap();
        assert_eq!(agg.count, 8);
        let stmts: Vec<_> = batch.iter().map(|(s, _)| s.clone()).collect();
        let (ok, cost) = measure(|| fx.backend.verify_aggregate(&stmts, &agg));
        assert_eq!(ok, Ok(true));
        assert_eq!(cost.ops.group_exps, 2);
        assert_eq!(cost.ops.verify_calls, 1);
        assert_eq!(cost.ops.aead_calls, 0);
        assert!(matches!(
            fx.backend.verify_aggregate(&stmts[..7], &agg),
            Err(ProofError::CountMismatch {
                expected: 8,
                got: 7
            })
        ));
    }

    #[test]
    fn aggregate_errors() {
        let mut fx = Fixture::new();
        assert_eq!(fx.backend.aggregate(&[]), Err(ProofError::EmptyBatch));
        let (s, w) = fx.offer(b"1,2,3\n", 0);
        let p = fx.prove(&s, &w);
        let foreign = Proof {
            backend_id: 9,
            attestation: p.attestation.clone(),
        };
        assert_eq!(
            fx.backend.aggregate(&[(s.clone(), p), (s, foreign)]),
            Err(ProofError::MixedBackends)
        );
    }
}
