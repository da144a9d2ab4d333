//! Prime-order subgroup of `Z_p^*` for the key-exchange baseline and the
//! aggregate-proof signatures.
//!
//! `p = 2^256 - 36113` is the largest 256-bit safe prime, `q = (p - 1) / 2`
//! is prime and `g = 4` generates the subgroup of quadratic residues, which
//! has order `q`.

use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;

use super::{sha256, CryptoError};
use crate::metrics;

pub const ELEMENT_BYTES: usize = 32;

const MODULUS_HEX: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff72ef";
const SCHNORR_NONCE_TAG: &[u8] = b"yotta/schnorr/nonce/v1";
const SCHNORR_CHALLENGE_TAG: &[u8] = b"yotta/schnorr/challenge/v1";

struct Params {
    p: BigUint,
    q: BigUint,
    g: BigUint,
}

fn params() -> &'static Params {
    static P: OnceLock<Params> = OnceLock::new();
    P.get_or_init(|| {
        let p = BigUint::parse_bytes(MODULUS_HEX.as_bytes(), 16).expect("modulus");
        let q = (&p - 1u32) >> 1;
        Params {
            p,
            q,
            g: BigUint::from(4u32),
        }
    })
}

pub fn group_modulus() -> &'static BigUint {
    &params().p
}

pub fn group_order() -> &'static BigUint {
    &params().q
}

pub fn group_generator() -> GroupElement {
    GroupElement(params().g.clone())
}

fn pow(base: &BigUint, exp: &BigUint) -> BigUint {
    metrics::record_exp();
    base.modpow(exp, &params().p)
}

fn to_fixed(v: &BigUint) -> [u8; ELEMENT_BYTES] {
    let raw = v.to_bytes_be();
    let mut out = [0u8; ELEMENT_BYTES];
    out[ELEMENT_BYTES - raw.len()..].copy_from_slice(&raw);
    out
}

/// Exponent in `[1, q)`.
#[derive(Clone, PartialEq, Eq)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn new(v: BigUint) -> Result<Self, CryptoError> {
        if v.is_zero() || &v >= group_order() {
            return Err(CryptoError::InvalidScalar);
        }
        Ok(Scalar(v))
    }

    pub fn from_u64(v: u64) -> Result<Self, CryptoError> {
        Scalar::new(BigUint::from(v))
    }

    /// Big-endian bytes; rejected unless the value lies in `[1, q)`.
    pub fn from_bytes_be(bytes: &[u8]) -> Result<Self, CryptoError> {
        Scalar::new(BigUint::from_bytes_be(bytes))
    }

    /// Uniform-enough sample: 512 random bits reduced into `[1, q)`.
    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar(reduce_nonzero(&wide))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

fn reduce_nonzero(bytes: &[u8]) -> BigUint {
    let q1 = group_order() - 1u32;
    BigUint::from_bytes_be(bytes) % q1 + 1u32
}

fn reduce(bytes: &[u8]) -> BigUint {
    BigUint::from_bytes_be(bytes) % group_order()
}

/// Member of the order-`q` subgroup.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    /// Validates `1 < v < p` and `v^q == 1`. Costs one exponentiation.
    pub fn new(v: BigUint) -> Result<Self, CryptoError> {
        let p = group_modulus();
        if v <= BigUint::one() || &v >= p {
            return Err(CryptoError::InvalidElement);
        }
        if !pow(&v, group_order()).is_one() {
            return Err(CryptoError::InvalidElement);
        }
        Ok(GroupElement(v))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != ELEMENT_BYTES {
            return Err(CryptoError::Malformed("element length"));
        }
        GroupElement::new(BigUint::from_bytes_be(bytes))
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_BYTES] {
        to_fixed(&self.0)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// `self^k`. Closed over the subgroup, so no revalidation.
    pub fn pow(&self, k: &Scalar) -> GroupElement {
        GroupElement(pow(&self.0, &k.0))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.to_bytes()))
    }
}

/// Fresh key-agreement pair `(a, g^a)`.
pub fn dh_keypair(rng: &mut impl RngCore) -> (Scalar, GroupElement) {
    let a = Scalar::random(rng);
    let pk = group_generator().pow(&a);
    (a, pk)
}

/// `peer^a`. Both sides of an exchange arrive at `g^(ab)`.
pub fn dh_shared(a: &Scalar, peer: &GroupElement) -> GroupElement {
    peer.pow(a)
}

/// Schnorr signing key over the same group.
#[derive(Clone)]
pub struct SigningKey {
    secret: Scalar,
    public: VerifyingKey,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VerifyingKey(GroupElement);

/// `(e, s)` challenge-response pair, 64 bytes encoded.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SchnorrSignature {
    pub e: [u8; 32],
    pub s: [u8; 32],
}

impl SchnorrSignature {
    pub const BYTES: usize = 64;

    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.e);
        out[32..].copy_from_slice(&self.s);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        if b.len() != Self::BYTES {
            return Err(CryptoError::Malformed("signature length"));
        }
        Ok(SchnorrSignature {
            e: b[..32].try_into().unwrap(),
            s: b[32..].try_into().unwrap(),
        })
    }
}

impl SigningKey {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        let secret = Scalar(reduce_nonzero(seed));
        let public = VerifyingKey(group_generator().pow(&secret));
        SigningKey { secret, public }
    }

    pub fn verifying_key(&self) -> &VerifyingKey {
        &self.public
    }

    /// Deterministic nonce `k = H(x ‖ msg)`, one exponentiation.
    pub fn sign(&self, msg: &[u8]) -> SchnorrSignature {
        let x = to_fixed(&self.secret.0);
        let k = Scalar(reduce_nonzero(&sha256(&[SCHNORR_NONCE_TAG, &x, msg])));
        let r = group_generator().pow(&k);
        let e = challenge(&r, &self.public, msg);
        let s = (&k.0 + &e * &self.secret.0) % group_order();
        SchnorrSignature {
            e: to_fixed(&e),
            s: to_fixed(&s),
        }
    }
}

fn challenge(r: &GroupElement, pk: &VerifyingKey, msg: &[u8]) -> BigUint {
    reduce(&sha256(&[
        SCHNORR_CHALLENGE_TAG,
        &r.to_bytes(),
        &pk.0.to_bytes(),
        msg,
    ]))
}

impl VerifyingKey {
    /// Recomputes `r = g^s · y^(q-e)`; two exponentiations.
    pub fn verify(&self, msg: &[u8], sig: &SchnorrSignature) -> bool {
        let q = group_order();
        let p = group_modulus();
        let e = BigUint::from_bytes_be(&sig.e);
        let s = BigUint::from_bytes_be(&sig.s);
        if &e >= q || &s >= q {
            return false;
        }
        let gs = pow(&params().g, &s);
        let ye = pow(self.0.value(), &((q - &e) % q));
        let r = (gs * ye) % p;
        if r <= BigUint::one() {
            return false;
        }
        challenge(&GroupElement(r), self, msg) == e
    }
}
