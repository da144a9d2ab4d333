//! Hashing, seller keys, key commitments and authenticated encryption.
//!
//! Every SHA-256 invocation in the crate goes through [`sha256`] so that
//! operation counts stay accurate.

mod group;

use std::fmt;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics;

pub use group::{
    dh_keypair, dh_shared, group_generator, group_modulus, group_order, GroupElement, Scalar,
    SchnorrSignature, SigningKey, VerifyingKey, ELEMENT_BYTES,
};

pub const KEY_BYTES: usize = 32;
pub const NONCE_BYTES: usize = 12;
pub const TAG_BYTES: usize = 16;

const KEYGEN_TAG: &[u8] = b"yotta/keygen/v1";
const KEY_COMMIT_TAG: &[u8] = b"yotta/keycommit/v1";
const CIPHERTEXT_DIGEST_TAG: &[u8] = b"yotta/ciphertext/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("plaintext must not be empty")]
    EmptyPlaintext,
    #[error("authentication failed")]
    AuthFailure,
    #[error("value is not a member of the group")]
    InvalidElement,
    #[error("scalar out of range")]
    InvalidScalar,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

/// SHA-256 over the concatenation of `parts`, counted as one hash call.
pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    let mut n = 0;
    for p in parts {
        h.update(p);
        n += p.len();
    }
    metrics::record_hash(n);
    h.finalize().into()
}

/// 32-byte symmetric key. Never serialized except through [`SymmetricKey::reveal`].
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; KEY_BYTES]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_BYTES]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_BYTES] = bytes
            .try_into()
            .map_err(|_| CryptoError::Malformed("key length"))?;
        Ok(SymmetricKey(arr))
    }

    /// Exposes the raw key bytes. Used for on-ledger key reveal and witness sealing.
    pub fn reveal(&self) -> &[u8; KEY_BYTES] {
        &self.0
    }

    /// Draws a fresh key from `rng`.
    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut k = [0u8; KEY_BYTES];
        rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Deterministic key derivation from a run seed and a key index.
pub fn gen_key(seed: u64, index: u64) -> SymmetricKey {
    SymmetricKey(sha256(&[
        KEYGEN_TAG,
        &seed.to_le_bytes(),
        &index.to_le_bytes(),
    ]))
}

macro_rules! hex_digest_type {
    ($name:ident) => {
        impl $name {
            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let v = hex::decode(s).map_err(|_| CryptoError::Malformed("hex digest"))?;
                let arr: [u8; 32] = v
                    .try_into()
                    .map_err(|_| CryptoError::Malformed("digest length"))?;
                Ok($name(arr))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

/// Public hash of a key binding a seller to its key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyCommitment(pub [u8; 32]);

hex_digest_type!(KeyCommitment);

/// `H("yotta/keycommit/v1" ‖ key)`.
pub fn commit_key(key: &SymmetricKey) -> KeyCommitment {
    KeyCommitment(sha256(&[KEY_COMMIT_TAG, &key.0]))
}

/// Digest of a serialized ciphertext, stored on-ledger in commitment-only mode.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CiphertextDigest(pub [u8; 32]);

hex_digest_type!(CiphertextDigest);

/// Source of 96-bit AEAD nonces.
pub trait NonceSource {
    fn next_nonce(&mut self) -> [u8; NONCE_BYTES];
}

impl<R: RngCore> NonceSource for R {
    fn next_nonce(&mut self) -> [u8; NONCE_BYTES] {
        let mut n = [0u8; NONCE_BYTES];
        self.fill_bytes(&mut n);
        n
    }
}

/// Always yields the same nonce. For known-answer tests and derived seals only.
#[derive(Debug, Clone, Copy)]
pub struct FixedNonce(pub [u8; NONCE_BYTES]);

impl NonceSource for FixedNonce {
    fn next_nonce(&mut self) -> [u8; NONCE_BYTES] {
        self.0
    }
}

/// ChaCha20-Poly1305 output.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub nonce: [u8; NONCE_BYTES],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_BYTES],
}

impl Ciphertext {
    /// `nonce ‖ body ‖ tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_BYTES + self.body.len() + TAG_BYTES);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() <= NONCE_BYTES + TAG_BYTES {
            return Err(CryptoError::Malformed("ciphertext too short"));
        }
        let (nonce, rest) = bytes.split_at(NONCE_BYTES);
        let (body, tag) = rest.split_at(rest.len() - TAG_BYTES);
        Ok(Ciphertext {
            nonce: nonce.try_into().expect("split"),
            body: body.to_vec(),
            tag: tag.try_into().expect("split"),
        })
    }

    pub fn encoded_len(&self) -> usize {
        NONCE_BYTES + self.body.len() + TAG_BYTES
    }

    pub fn digest(&self) -> CiphertextDigest {
        CiphertextDigest(sha256(&[CIPHERTEXT_DIGEST_TAG, &self.to_bytes()]))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let v = hex::decode(s).map_err(|_| CryptoError::Malformed("hex ciphertext"))?;
        Ciphertext::from_bytes(&v)
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ciphertext")
            .field("nonce", &hex::encode(self.nonce))
            .field("body_len", &self.body.len())
            .field("tag", &hex::encode(self.tag))
            .finish()
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ciphertext::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn encrypt(
    key: &SymmetricKey,
    plaintext: &[u8],
    nonces: &mut impl NonceSource,
) -> Result<Ciphertext, CryptoError> {
    encrypt_with_aad(key, plaintext, &[], nonces)
}

pub fn decrypt(key: &SymmetricKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    decrypt_with_aad(key, ct, &[])
}

pub(crate) fn encrypt_with_aad(
    key: &SymmetricKey,
    plaintext: &[u8],
    aad: &[u8],
    nonces: &mut impl NonceSource,
) -> Result<Ciphertext, CryptoError> {
    if plaintext.is_empty() {
        return Err(CryptoError::EmptyPlaintext);
    }
    metrics::record_aead();
    let nonce = nonces.next_nonce();
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let mut body = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), aad, &mut body)
        .map_err(|_| CryptoError::Malformed("plaintext too long"))?;
    Ok(Ciphertext {
        nonce,
        body,
        tag: tag.into(),
    })
}

pub(crate) fn decrypt_with_aad(
    key: &SymmetricKey,
    ct: &Ciphertext,
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    metrics::record_aead();
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let mut body = ct.body.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&ct.nonce),
            aad,
            &mut body,
            Tag::from_slice(&ct.tag),
        )
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gen_key_is_deterministic_per_index() {
        assert_eq!(gen_key(9, 1), gen_key(9, 1));
        assert_ne!(gen_key(9, 1), gen_key(9, 2));
        assert_ne!(gen_key(9, 1), gen_key(10, 1));
    }

    #[test]
    fn commitment_separates_from_raw_hash() {
        let k = gen_key(1, 1);
        assert_eq!(commit_key(&k), commit_key(&k));
        assert_ne!(commit_key(&k).0, sha256(&[k.reveal()]));
        assert_ne!(commit_key(&k), commit_key(&gen_key(1, 2)));
    }

    #[test]
    fn wrong_key_fails_authentication() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let ct = encrypt(&gen_key(0, 0), b"address", &mut rng).unwrap();
        assert_eq!(decrypt(&gen_key(0, 1), &ct), Err(CryptoError::AuthFailure));
        assert_eq!(decrypt(&gen_key(0, 0), &ct).unwrap(), b"address");
    }

    #[test]
    fn empty_plaintext_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(
            encrypt(&gen_key(0, 0), b"", &mut rng),
            Err(CryptoError::EmptyPlaintext)
        );
    }

    #[test]
    fn aad_is_bound() {
        let k = gen_key(4, 4);
        let ct = encrypt_with_aad(&k, b"witness", b"ctx-a", &mut FixedNonce([1; 12])).unwrap();
        assert!(decrypt_with_aad(&k, &ct, b"ctx-a").is_ok());
        assert_eq!(
            decrypt_with_aad(&k, &ct, b"ctx-b"),
            Err(CryptoError::AuthFailure)
        );
    }

    #[test]
    fn ciphertext_encoding_rejects_short_input() {
        assert!(Ciphertext::from_bytes(&[0u8; 28]).is_err());
        let ct = Ciphertext {
            nonce: [7; 12],
            body: vec![1, 2, 3],
            tag: [9; 16],
        };
        assert_eq!(Ciphertext::from_bytes(&ct.to_bytes()).unwrap(), ct);
    }

    #[test]
    fn key_debug_is_redacted() {
        assert_eq!(format!("{:?}", gen_key(1, 1)), "SymmetricKey(..)");
    }
}
