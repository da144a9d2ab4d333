//! Multi-buyer, multi-seller runs with scripted misbehaviour.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate_offers, buyer_finalize, buyer_fund, buyer_verify_offers, failing_dataset,
    passing_dataset, seller_claim, seller_prepare, Finalized, IntegrityStage, MarketContext,
    PreparedOffer, ProtocolError, PurchaseOrder, SellerOffer, VerificationMode,
};
use crate::config::ScenarioConfig;
use crate::crypto::{commit_key, sha256, SymmetricKey};
use crate::ledger::{
    replay, AccountId, ContractId, EntryStatus, Ledger, LedgerMode, Tokens, TxBody,
};
use crate::metrics::{measure, Cost, OpCounts};
use crate::proof::AggregateProof;
use crate::store::ContentHash;

pub use crate::config::AdversaryMix;

/// Role a seller plays in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    Honest,
    WrongKey,
    FailingF,
    ProofReplay,
    StoreTamper,
    NonClaimer,
}

impl AdversaryMix {
    /// Seller roles: `floor(pct * n / 100)` per kind, placed by a seeded
    /// shuffle.
    pub fn assign_sellers(&self, sellers: usize, seed: u64) -> Vec<Adversary> {
        let count = |pct: u32| pct as usize * sellers / 100;
        let mut roles = Vec::with_capacity(sellers);
        for (pct, role) in [
            (self.wrong_key, Adversary::WrongKey),
            (self.failing_f, Adversary::FailingF),
            (self.proof_replay, Adversary::ProofReplay),
            (self.store_tamper, Adversary::StoreTamper),
            (self.non_claimer, Adversary::NonClaimer),
        ] {
            roles.extend(std::iter::repeat_n(role, count(pct)));
        }
        roles.resize(sellers, Adversary::Honest);
        roles.shuffle(&mut role_rng(seed, b"sellers"));
        roles
    }

    /// `true` for buyers that never fund.
    pub fn assign_buyers(&self, buyers: usize, seed: u64) -> Vec<bool> {
        let k = self.non_funding_buyer as usize * buyers / 100;
        let mut v: Vec<bool> = (0..buyers).map(|i| i < k).collect();
        v.shuffle(&mut role_rng(seed, b"buyers"));
        v
    }
}

fn role_rng(seed: u64, which: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(sha256(&[b"yotta/roles/v1", which, &seed.to_le_bytes()]))
}

fn pair_rng(seed: u64, buyer: usize, seller: usize, purpose: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(sha256(&[
        b"yotta/offer-rng/v1",
        purpose,
        &seed.to_le_bytes(),
        &(buyer as u64).to_le_bytes(),
        &(seller as u64).to_le_bytes(),
    ]))
}

pub fn buyer_account(b: usize) -> AccountId {
    AccountId::new(format!("buyer-{b}"))
}

pub fn seller_account(s: usize) -> AccountId {
    AccountId::new(format!("seller-{s}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "stage", rename_all = "snake_case")]
pub enum Outcome {
    Delivered,
    Refunded,
    RejectedAtVerification,
    /// Proof accepted but the buyer never escrowed payment.
    Unfunded,
    /// Seller was paid but the buyer could not recover valid data.
    IntegrityFailure(IntegrityStage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferRecord {
    pub buyer: AccountId,
    pub seller: AccountId,
    pub role: Adversary,
    pub asking_price: Tokens,
    pub paid: Tokens,
    pub outcome: Outcome,
    pub content_hash: ContentHash,
    /// Whether delivered bytes equal what the seller prepared.
    pub data_matches: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub offers: usize,
    pub delivered: usize,
    pub refunded: usize,
    pub rejected_at_verification: usize,
    pub unfunded: usize,
    pub integrity_failures: usize,
    pub tokens_paid: Tokens,
    pub tokens_refunded: Tokens,
    pub aggregate_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.subject, self.reason)
    }
}

pub const PHASES: [&str; 7] = [
    "prepare",
    "aggregate",
    "verify",
    "fund",
    "claim",
    "settle",
    "finalize",
];

/// Run summary. Everything except `wall_ms` is a pure function of the
/// scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketReport {
    pub seed: u64,
    pub buyers: usize,
    pub sellers: usize,
    pub ledger_mode: LedgerMode,
    pub verify_mode: VerificationMode,
    pub offers: Vec<OfferRecord>,
    pub totals: Totals,
    pub proof_bytes: usize,
    pub aggregate_bytes: usize,
    pub ops: BTreeMap<String, OpCounts>,
    pub wall_ms: BTreeMap<String, f64>,
    pub final_height: u64,
    pub log_records: usize,
    pub violations: Vec<Violation>,
}

impl MarketReport {
    pub fn without_timings(&self) -> MarketReport {
        MarketReport {
            wall_ms: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// One buyer's view of the run.
#[derive(Debug, Clone)]
pub struct BuyerBatch {
    pub buyer: AccountId,
    pub funds: bool,
    pub offers: Vec<SellerOffer>,
    /// Bytes each seller prepared, parallel to `offers`.
    pub originals: Vec<Vec<u8>>,
    pub aggregate: Option<AggregateProof>,
    pub contract: Option<ContractId>,
}

#[derive(Debug)]
pub struct MarketRun {
    pub report: MarketReport,
    pub ledger: Ledger,
    pub batches: Vec<BuyerBatch>,
}

#[derive(Default)]
struct PhaseBook(BTreeMap<&'static str, Cost>);

impl PhaseBook {
    fn add(&mut self, phase: &'static str, cost: Cost) {
        *self.0.entry(phase).or_default() += cost;
    }
}

fn prepare_one(
    cfg: &ScenarioConfig,
    ctx: &MarketContext,
    role: Adversary,
    b: usize,
    s: usize,
) -> Result<PreparedOffer, ProtocolError> {
    let mut rng = pair_rng(cfg.seed, b, s, b"prepare");
    let eval = ctx.registry.resolve(cfg.eval_for(b))?;
    let data = match role {
        Adversary::FailingF => failing_dataset(&eval, cfg.item_bytes, &mut rng)?,
        _ => passing_dataset(&eval, cfg.item_bytes, &mut rng)?,
    };
    seller_prepare(
        &*ctx.backend,
        &ctx.store,
        &ctx.registry,
        seller_account(s),
        &data,
        eval.id(),
        cfg.asking_price(s),
        &mut rng,
    )
}

/// Runs the five-step exchange for every buyer against every seller.
pub fn run_market(cfg: &ScenarioConfig, ctx: &MarketContext) -> Result<MarketRun, ProtocolError> {
    cfg.validate(&ctx.registry)
        .map_err(|e| ProtocolError::InvalidConfig(e.to_string()))?;
    let roles = cfg.adversary.assign_sellers(cfg.sellers, cfg.seed);
    let funding: Vec<bool> = cfg
        .adversary
        .assign_buyers(cfg.buyers, cfg.seed)
        .iter()
        .map(|n| !n)
        .collect();
    let mut book = PhaseBook::default();
    let mut ledger = Ledger::genesis((0..cfg.buyers).map(|b| (buyer_account(b), cfg.budget())));

    // Seller side, in parallel; ops are summed per task so they stay exact.
    let pairs: Vec<(usize, usize)> = (0..cfg.buyers)
        .flat_map(|b| (0..cfg.sellers).map(move |s| (b, s)))
        .collect();
    let (prepared, outer) = measure(|| {
        pairs
            .par_iter()
            .map(|&(b, s)| measure(|| prepare_one(cfg, ctx, roles[s], b, s)))
            .collect::<Vec<_>>()
    });
    let mut prep_ops = OpCounts::default();
    let mut batches: Vec<BuyerBatch> = (0..cfg.buyers)
        .map(|b| BuyerBatch {
            buyer: buyer_account(b),
            funds: funding[b],
            offers: Vec::with_capacity(cfg.sellers),
            originals: Vec::with_capacity(cfg.sellers),
            aggregate: None,
            contract: None,
        })
        .collect();
    let mut witnesses = Vec::with_capacity(pairs.len());
    for ((b, _), (res, cost)) in pairs.iter().zip(prepared) {
        let p = res?;
        prep_ops += cost.ops;
        batches[*b].offers.push(p.offer);
        batches[*b].originals.push(p.witness.data.clone());
        witnesses.push(p.witness);
    }
    book.add(
        "prepare",
        Cost {
            ops: prep_ops,
            wall: outer.wall,
        },
    );

    // Scripted misbehaviour, outside any timed phase.
    for batch in &mut batches {
        let donors: Vec<_> = batch.offers.iter().map(|o| o.proof.clone()).collect();
        for (s, offer) in batch.offers.iter_mut().enumerate() {
            match roles[s] {
                Adversary::ProofReplay => offer.proof = donors[(s + 1) % donors.len()].clone(),
                Adversary::StoreTamper => {
                    ctx.store.tamper(&offer.content_hash, b"tampered payload")?
                }
                _ => {}
            }
        }
    }

    let mut records: Vec<Vec<OfferRecord>> = Vec::with_capacity(cfg.buyers);
    let mut fallbacks = 0;
    for (b, batch) in batches.iter_mut().enumerate() {
        if cfg.verify_mode == VerificationMode::Aggregated {
            let (agg, cost) = measure(|| aggregate_offers(&*ctx.backend, &batch.offers));
            book.add("aggregate", cost);
            batch.aggregate = Some(agg?);
        }
        let verdict = buyer_verify_offers(
            &*ctx.backend,
            &batch.offers,
            batch.aggregate.as_ref(),
            cfg.verify_mode,
        );
        book.add("verify", verdict.cost.total());
        fallbacks += usize::from(verdict.cost.fallback.is_some());

        let mut recs: Vec<OfferRecord> = batch
            .offers
            .iter()
            .enumerate()
            .map(|(s, o)| OfferRecord {
                buyer: batch.buyer.clone(),
                seller: o.seller.clone(),
                role: roles[s],
                asking_price: o.asking_price,
                paid: 0,
                outcome: Outcome::RejectedAtVerification,
                content_hash: o.content_hash,
                data_matches: None,
            })
            .collect();
        for &i in &verdict.accepted {
            recs[i].outcome = Outcome::Unfunded;
        }
        if batch.funds && !verdict.accepted.is_empty() {
            let accepted: Vec<_> = verdict
                .accepted
                .iter()
                .map(|&i| batch.offers[i].clone())
                .collect();
            let order = PurchaseOrder::at_asking_price(
                batch.buyer.clone(),
                accepted,
                cfg.deadline_blocks,
                cfg.ledger_mode,
            );
            let (c, cost) = measure(|| buyer_fund(&mut ledger, &order));
            book.add("fund", cost);
            let c = c?;
            batch.contract = Some(c);
            for &i in &verdict.accepted {
                recs[i].outcome = Outcome::Refunded;
            }
        }
        let _ = b;
        records.push(recs);
    }

    // Sellers reveal keys.
    for (b, batch) in batches.iter().enumerate() {
        let Some(c) = batch.contract else { continue };
        for (s, o) in batch.offers.iter().enumerate() {
            if records[b][s].outcome != Outcome::Refunded {
                continue;
            }
            let key = match roles[s] {
                Adversary::NonClaimer => continue,
                Adversary::WrongKey => {
                    SymmetricKey::random(&mut pair_rng(cfg.seed, b, s, b"wrong-key"))
                }
                _ => witnesses[b * cfg.sellers + s].key.clone(),
            };
            let (res, cost) = measure(|| seller_claim(&mut ledger, c, &o.seller, &key));
            book.add("claim", cost);
            res?;
        }
    }

    // Deadline passes for whatever is still escrowed.
    let (res, cost) = measure(|| -> Result<(), ProtocolError> {
        let pending: Vec<ContractId> = batches
            .iter()
            .filter_map(|bt| bt.contract)
            .filter(|&c| ledger.contract(c).is_some_and(|k| k.escrowed() > 0))
            .collect();
        if let Some(latest) = pending
            .iter()
            .filter_map(|&c| ledger.contract(c))
            .map(|k| k.deadline)
            .max()
        {
            ledger.advance_blocks(latest + 1 - ledger.height().min(latest))?;
            for c in pending {
                ledger.refund_expired(c)?;
            }
        }
        Ok(())
    });
    book.add("settle", cost);
    res?;

    for (b, batch) in batches.iter().enumerate() {
        let Some(c) = batch.contract else { continue };
        let funded: Vec<usize> = (0..batch.offers.len())
            .filter(|&s| records[b][s].outcome == Outcome::Refunded)
            .collect();
        let offers: Vec<SellerOffer> = funded.iter().map(|&s| batch.offers[s].clone()).collect();
        let (fin, cost) =
            measure(|| buyer_finalize(&mut ledger, &ctx.store, &ctx.registry, c, &offers));
        book.add("finalize", cost);
        for (&s, (_, f)) in funded.iter().zip(fin?) {
            let r = &mut records[b][s];
            match f {
                Finalized::Delivered(data) => {
                    r.outcome = Outcome::Delivered;
                    r.paid = ledger
                        .contract(c)
                        .and_then(|k| k.entry(&r.seller))
                        .map_or(0, |e| e.amount);
                    r.data_matches = Some(data == batch.originals[s]);
                }
                Finalized::Refunded => r.outcome = Outcome::Refunded,
                Finalized::IntegrityFailure(stage) => {
                    r.outcome = Outcome::IntegrityFailure(stage);
                    r.paid = ledger
                        .contract(c)
                        .and_then(|k| k.entry(&r.seller))
                        .map_or(0, |e| e.amount);
                }
            }
        }
    }
    ledger.close()?;

    let offers: Vec<OfferRecord> = records.into_iter().flatten().collect();
    let mut totals = Totals {
        offers: offers.len(),
        aggregate_fallbacks: fallbacks,
        ..Totals::default()
    };
    for r in &offers {
        totals.tokens_paid += r.paid;
        match r.outcome {
            Outcome::Delivered => totals.delivered += 1,
            Outcome::Refunded => {
                totals.refunded += 1;
                totals.tokens_refunded += r.asking_price;
            }
            Outcome::RejectedAtVerification => totals.rejected_at_verification += 1,
            Outcome::Unfunded => totals.unfunded += 1,
            Outcome::IntegrityFailure(_) => totals.integrity_failures += 1,
        }
    }
    let first = &batches[0];
    let report = MarketReport {
        seed: cfg.seed,
        buyers: cfg.buyers,
        sellers: cfg.sellers,
        ledger_mode: cfg.ledger_mode,
        verify_mode: cfg.verify_mode,
        offers,
        totals,
        proof_bytes: first.offers[0].proof.size_bytes(),
        aggregate_bytes: first
            .aggregate
            .as_ref()
            .map_or(0, AggregateProof::size_bytes),
        ops: PHASES
            .iter()
            .map(|p| {
                (
                    p.to_string(),
                    book.0.get(p).map(|c| c.ops).unwrap_or_default(),
                )
            })
            .collect(),
        wall_ms: PHASES
            .iter()
            .map(|p| (p.to_string(), book.0.get(p).map_or(0.0, Cost::wall_ms)))
            .collect(),
        final_height: ledger.height(),
        log_records: ledger.log().len(),
        violations: Vec::new(),
    };
    let mut run = MarketRun {
        report,
        ledger,
        batches,
    };
    run.report.violations = check_fair_exchange(&run);
    Ok(run)
}

/// Cross-checks every offer record against the final ledger and the log.
pub fn check_fair_exchange(run: &MarketRun) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |subject: String, reason: &str| {
        out.push(Violation {
            subject,
            reason: reason.to_owned(),
        })
    };
    let state = run.ledger.state();

    match replay(run.ledger.log()) {
        Ok(replayed) if replayed == *state => {}
        Ok(_) => flag("ledger".into(), "replayed state differs from live state"),
        Err(_) => flag("ledger".into(), "log does not replay"),
    }
    if !state.is_conserved() {
        flag("ledger".into(), "token supply not conserved");
    }
    if !state.revealed_keys_sound() {
        flag("ledger".into(), "revealed key does not open its commitment");
    }
    for c in state.contracts.values() {
        if c.entries.iter().any(|e| e.status == EntryStatus::Funded) {
            flag(c.id.to_string(), "entries left in escrow");
        }
    }

    let mut spent: BTreeMap<&AccountId, Tokens> = BTreeMap::new();
    let mut earned: BTreeMap<&AccountId, Tokens> = BTreeMap::new();
    for (batch, recs) in run
        .batches
        .iter()
        .zip(run.report.offers.chunks(run.report.sellers))
    {
        let contract = batch.contract.and_then(|c| run.ledger.contract(c));
        if contract.is_some() && !batch.funds {
            flag(batch.buyer.to_string(), "non-funding buyer deployed escrow");
        }
        for r in recs {
            let subject = format!("{}/{}", r.buyer, r.seller);
            let entry = contract.and_then(|c| c.entry(&r.seller));
            let status = entry.map(|e| e.status);
            let ok = match r.outcome {
                Outcome::Delivered => {
                    status == Some(EntryStatus::Paid) && r.data_matches == Some(true)
                }
                Outcome::Refunded => status == Some(EntryStatus::Refunded) && r.paid == 0,
                Outcome::RejectedAtVerification => entry.is_none(),
                Outcome::Unfunded => contract.is_none(),
                Outcome::IntegrityFailure(_) => false,
            };
            if !ok {
                flag(subject, "outcome disagrees with ledger or delivery");
            }
            if status == Some(EntryStatus::Paid) {
                let amount = entry.map_or(0, |e| e.amount);
                *spent.entry(&r.buyer).or_default() += amount;
                *earned.entry(&r.seller).or_default() += amount;
            }
        }
    }
    let budget = run.ledger.log().first().and_then(|g| match &g.body {
        TxBody::Genesis { balances } => Some(balances.clone()),
        _ => None,
    });
    for batch in &run.batches {
        let start = budget
            .as_ref()
            .and_then(|b| b.get(&batch.buyer))
            .copied()
            .unwrap_or(0);
        let paid = spent.get(&batch.buyer).copied().unwrap_or(0);
        if state.balance(&batch.buyer) + paid != start {
            flag(
                batch.buyer.to_string(),
                "buyer balance does not match payments",
            );
        }
    }
    for (seller, amount) in &earned {
        if state.balance(seller) != *amount {
            flag(seller.to_string(), "seller balance does not match payments");
        }
    }

    // A correct key must never be public without payment.
    for rec in run.ledger.log() {
        if let TxBody::SubmitKey {
            contract,
            seller,
            key,
            outcome: crate::ledger::SubmitOutcome::Rejected { .. },
        } = &rec.body
        {
            let opened = hex::decode(key)
                .ok()
                .and_then(|k| SymmetricKey::from_slice(&k).ok())
                .zip(run.ledger.contract(*contract).and_then(|c| c.entry(seller)))
                .is_some_and(|(k, e)| commit_key(&k) == e.key_commitment);
            if opened {
                flag(
                    format!("{contract}/{seller}"),
                    "valid key revealed without payment",
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ContentStore;
    use std::sync::Arc;

    fn ctx(seed: u64) -> MarketContext {
        MarketContext::reference(Arc::new(ContentStore::in_memory()), seed)
    }

    #[test]
    fn role_counts_floor() {
        let mix = AdversaryMix {
            wrong_key: 15,
            failing_f: 10,
            non_claimer: 33,
            ..Default::default()
        };
        let roles = mix.assign_sellers(7, 3);
        let n = |r| roles.iter().filter(|&&x| x == r).count();
        assert_eq!(n(Adversary::WrongKey), 1);
        assert_eq!(n(Adversary::FailingF), 0);
        assert_eq!(n(Adversary::NonClaimer), 2);
        assert_eq!(n(Adversary::Honest), 4);
        assert_eq!(roles, mix.assign_sellers(7, 3));
    }

    #[test]
    fn honest_market_delivers_everything() {
        let cfg = ScenarioConfig::honest(11, 2, 5);
        let run = run_market(&cfg, &ctx(11)).unwrap();
        assert_eq!(run.report.totals.delivered, 10);
        assert!(
            run.report.violations.is_empty(),
            "{:?}",
            run.report.violations
        );
        assert_eq!(run.report.ops["verify"].group_exps, 4);
        assert_eq!(run.report.final_height, 0);
    }

    #[test]
    fn single_seller_single_buyer() {
        let mut cfg = ScenarioConfig::honest(1, 1, 1);
        cfg.verify_mode = VerificationMode::Individual;
        let run = run_market(&cfg, &ctx(1)).unwrap();
        assert_eq!(run.report.totals.delivered, 1);
        assert_eq!(run.report.aggregate_bytes, 0);
    }

    #[test]
    fn mixed_market_is_fair() {
        let mut cfg = ScenarioConfig::honest(5, 3, 10);
        cfg.adversary = AdversaryMix {
            wrong_key: 10,
            failing_f: 10,
            proof_replay: 10,
            store_tamper: 10,
            non_claimer: 10,
            non_funding_buyer: 34,
        };
        let run = run_market(&cfg, &ctx(5)).unwrap();
        assert!(
            run.report.violations.is_empty(),
            "{:?}",
            run.report.violations
        );
        let t = &run.report.totals;
        assert_eq!(t.offers, 30);
        assert_eq!(
            t.delivered + t.refunded + t.rejected_at_verification + t.unfunded,
            30
        );
        assert_eq!(t.rejected_at_verification, 9);
        assert_eq!(t.unfunded, 7);
        assert_eq!(t.refunded, 4);
        assert_eq!(t.delivered, 10);
        assert!(run.report.final_height > cfg.deadline_blocks);
    }
}
