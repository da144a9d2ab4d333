//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use yotta_core::protocol::{
    aggregate_offers, passing_dataset, seller_account, seller_prepare, MarketContext,
};
use yotta_core::{AggregateProof, ContentStore, SellerOffer};

pub const EVAL: &str = "schema:csv:f64x3";

pub struct Batch {
    pub ctx: MarketContext,
    pub offers: Vec<SellerOffer>,
    pub aggregate: AggregateProof,
}

/// `sellers` honest offers of about `item_bytes` each, plus their aggregate.
pub fn honest_batch(sellers: usize, item_bytes: usize, seed: u64) -> Batch {
    let ctx = MarketContext::reference(Arc::new(ContentStore::in_memory()), seed);
    let eval = ctx.registry.resolve(EVAL).expect("builtin eval");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let offers: Vec<SellerOffer> = (0..sellers)
        .map(|s| {
            let data = passing_dataset(&eval, item_bytes, &mut rng).expect("dataset");
            seller_prepare(
                &*ctx.backend,
                &ctx.store,
                &ctx.registry,
                seller_account(s),
                &data,
                EVAL,
                10,
                &mut rng,
            )
            .expect("prepare")
            .offer
        })
        .collect();
    let aggregate = aggregate_offers(&*ctx.backend, &offers).expect("aggregate");
    Batch {
        ctx,
        offers,
        aggregate,
    }
}
