//! Pairwise Diffie-Hellman delivery: the comparison baseline.
//!
//! Each buyer-seller pair runs its own key agreement, the seller encrypts
//! the item under the derived key and the buyer decrypts and checks it
//! against the advertised content hash. Nothing is shared across pairs, so
//! all costs grow linearly in the number of sellers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::crypto::{
    decrypt, dh_keypair, dh_shared, encrypt, sha256, CryptoError, GroupElement, Scalar,
    SymmetricKey,
};
use crate::metrics::{self, measure, Cost};
use crate::store::ContentHash;

const KDF_TAG: &[u8] = b"yotta/dcdh/kdf/v1";

pub const PHASES: [&str; 4] = ["exchange", "transfer", "decrypt", "verify"];

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline config: {0}")]
    InvalidConfig(&'static str),
    #[error("key agreement produced different secrets")]
    KeyMismatch,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// One party's ephemeral key-agreement pair.
#[derive(Clone)]
pub struct Party {
    secret: Scalar,
    pub public: GroupElement,
}

impl Party {
    pub fn generate(rng: &mut impl RngCore) -> Party {
        let (secret, public) = dh_keypair(rng);
        Party { secret, public }
    }
}

/// What the seller advertises and what it actually sends.
#[derive(Debug, Clone)]
pub struct SellerItem {
    pub advertised: ContentHash,
    pub data: Vec<u8>,
}

impl SellerItem {
    pub fn honest(data: Vec<u8>) -> SellerItem {
        SellerItem {
            advertised: ContentHash::of(&data),
            data,
        }
    }
}

/// Per-item check the buyer runs after decrypting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemCheck {
    pub expected: ContentHash,
    pub observed: ContentHash,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct PairwiseSession {
    pub buyer_public: GroupElement,
    pub seller_public: GroupElement,
    pub shared: GroupElement,
    pub key: SymmetricKey,
    pub check: ItemCheck,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SessionCost {
    pub exchange: Cost,
    pub transfer: Cost,
    pub decrypt: Cost,
    pub verify: Cost,
}

impl SessionCost {
    pub fn phase(&self, name: &str) -> Cost {
        match name {
            "exchange" => self.exchange,
            "transfer" => self.transfer,
            "decrypt" => self.decrypt,
            "verify" => self.verify,
            _ => Cost::default(),
        }
    }

    pub fn total(&self) -> Cost {
        self.exchange + self.transfer + self.decrypt + self.verify
    }
}

impl std::ops::Add for SessionCost {
    type Output = SessionCost;

    fn add(self, o: SessionCost) -> SessionCost {
        SessionCost {
            exchange: self.exchange + o.exchange,
            transfer: self.transfer + o.transfer,
            decrypt: self.decrypt + o.decrypt,
            verify: self.verify + o.verify,
        }
    }
}

fn derive_key(shared: &GroupElement) -> SymmetricKey {
    SymmetricKey::from_bytes(sha256(&[KDF_TAG, &shared.to_bytes()]))
}

/// One full session. Returns the data only if it matches the advertised
/// hash.
pub fn run_pair(
    buyer_rng: &mut impl RngCore,
    seller_rng: &mut impl RngCore,
    item: &SellerItem,
) -> Result<(Option<Vec<u8>>, PairwiseSession, SessionCost), BaselineError> {
    let (agreed, exchange) = measure(|| {
        let buyer = Party::generate(buyer_rng);
        let seller = Party::generate(seller_rng);
        // Each side checks the other's element before using it.
        let at_seller = GroupElement::from_bytes(&buyer.public.to_bytes())?;
        let at_buyer = GroupElement::from_bytes(&seller.public.to_bytes())?;
        let seller_shared = dh_shared(&seller.secret, &at_seller);
        let buyer_shared = dh_shared(&buyer.secret, &at_buyer);
        Ok::<_, BaselineError>((
            derive_key(&buyer_shared),
            derive_key(&seller_shared),
            buyer_shared,
            buyer.public,
            seller.public,
        ))
    });
    let (buyer_key, seller_key, shared, buyer_public, seller_public) = agreed?;
    if buyer_key.reveal() != seller_key.reveal() {
        return Err(BaselineError::KeyMismatch);
    }

    let (sent, transfer) = measure(|| encrypt(&seller_key, &item.data, seller_rng));
    let sent = sent?;
    let (received, decrypt_cost) = measure(|| decrypt(&buyer_key, &sent));
    let received = received?;
    let (check, verify) = measure(|| {
        metrics::record_verify();
        let observed = ContentHash::of(&received);
        ItemCheck {
            expected: item.advertised,
            observed,
            passed: observed == item.advertised,
        }
    });

    let delivered = check.passed.then_some(received);
    let session = PairwiseSession {
        buyer_public,
        seller_public,
        shared,
        key: buyer_key,
        check,
    };
    let cost = SessionCost {
        exchange,
        transfer,
        decrypt: decrypt_cost,
        verify,
    };
    Ok((delivered, session, cost))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub sellers: usize,
    pub item_bytes: usize,
    pub parallel: bool,
    pub delivered: usize,
    pub sessions: Vec<SessionCost>,
    /// Sum over sessions. Ops are exact; wall is summed per session even
    /// when sessions ran in parallel.
    pub totals: SessionCost,
    /// Elapsed time of the whole run.
    pub elapsed: std::time::Duration,
}

fn session_rng(seed: u64, index: usize, side: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(sha256(&[
        b"yotta/dcdh/rng/v1",
        side,
        &seed.to_le_bytes(),
        &(index as u64).to_le_bytes(),
    ]))
}

/// Item `index` for a run; honest and reproducible from `seed`.
pub fn baseline_item(seed: u64, index: usize, item_bytes: usize) -> SellerItem {
    let mut data = vec![0u8; item_bytes];
    session_rng(seed, index, b"item").fill_bytes(&mut data);
    SellerItem::honest(data)
}

/// One buyer against `sellers` sellers, sequentially.
pub fn run_baseline(
    sellers: usize,
    item_bytes: usize,
    seed: u64,
) -> Result<BaselineReport, BaselineError> {
    run_baseline_with(sellers, item_bytes, seed, false)
}

/// As [`run_baseline`]; with `parallel` the sessions run on the rayon pool.
pub fn run_baseline_with(
    sellers: usize,
    item_bytes: usize,
    seed: u64,
    parallel: bool,
) -> Result<BaselineReport, BaselineError> {
    if sellers == 0 {
        return Err(BaselineError::InvalidConfig("at least one seller"));
    }
    if item_bytes == 0 {
        return Err(BaselineError::InvalidConfig("item size must be positive"));
    }
    let one = |i: usize| {
        let item = baseline_item(seed, i, item_bytes);
        run_pair(
            &mut session_rng(seed, i, b"buyer"),
            &mut session_rng(seed, i, b"seller"),
            &item,
        )
        .map(|(d, _, c)| (d.is_some(), c))
    };
    let start = std::time::Instant::now();
    let results: Vec<_> = if parallel {
        (0..sellers).into_par_iter().map(one).collect()
    } else {
        (0..sellers).map(one).collect()
    };
    let elapsed = start.elapsed();
    let mut sessions = Vec::with_capacity(sellers);
    let mut delivered = 0;
    for r in results {
        let (ok, cost) = r?;
        delivered += usize::from(ok);
        sessions.push(cost);
    }
    let totals = sessions
        .iter()
        .copied()
        .fold(SessionCost::default(), |a, b| a + b);
    Ok(BaselineReport {
        sellers,
        item_bytes,
        parallel,
        delivered,
        sessions,
        totals,
        elapsed,
    })
}
