//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.
//!
//! Criteria run one at a time on purpose: criterion 2 compares wall times
//! and must not share the machine with the others.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use yotta_core::baseline::run_baseline;
use yotta_core::ledger::{parse_ndjson, replay, verify_log, EntryStatus};
use yotta_core::protocol::{
    aggregate_offers, buyer_account, buyer_verify_offers, failing_dataset, passing_dataset,
    run_market, seller_prepare, Adversary, MarketContext, Outcome, SellerOffer,
};
use yotta_core::sweep::{run_sweep, SweepOptions, System};
use yotta_core::{
    AccountId, AdversaryMix, ContentStore, LedgerMode, MarketReport, ScenarioConfig,
    VerificationMode,
};

const CRIT1_MAX: Duration = Duration::from_secs(10);
const CRIT2_MAX: Duration = Duration::from_secs(120);
const CRIT2_SWEEP: [usize; 3] = [10, 100, 1000];
const CRIT2_REPS: usize = 5;
const CRIT3_SIZES: [usize; 3] = [1 << 10, 64 << 10, 1 << 20];
const CRIT4_EXHAUSTIVE_MAX: usize = 4;
const CRIT4_RANDOM_BATCHES: usize = 200;
const CRIT4_RANDOM_MAX: usize = 32;
const CRIT5_SCENARIOS: u64 = 50;
const CRIT6_TRIALS: u64 = 100;

type Check = fn(&Path) -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn yotta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yotta"))
        .args(args)
        .env_remove("YOTTA_STORE_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &ScenarioConfig) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, toml_text(cfg)).unwrap();
    path
}

fn toml_text(cfg: &ScenarioConfig) -> String {
    let mode = match cfg.ledger_mode {
        LedgerMode::CommitmentOnly => "commitment-only",
        LedgerMode::FullDecrypt => "full-decrypt",
    };
    let verify = match cfg.verify_mode {
        VerificationMode::Individual => "individual",
        VerificationMode::Aggregated => "aggregated",
    };
    let evals: Vec<String> = cfg.evals.iter().map(|e| format!("{e:?}")).collect();
    let a = &cfg.adversary;
    format!(
        "seed = {}\nbuyers = {}\nsellers = {}\nprice = {}\nprice_step = {}\ndeadline_blocks = {}\n\
         ledger_mode = \"{mode}\"\nverify_mode = \"{verify}\"\nitem_bytes = {}\nevals = [{}]\n\n\
         [adversary]\nwrong_key = {}\nfailing_f = {}\nproof_replay = {}\nstore_tamper = {}\n\
         non_claimer = {}\nnon_funding_buyer = {}\n",
        cfg.seed,
        cfg.buyers,
        cfg.sellers,
        cfg.price,
        cfg.price_step,
        cfg.deadline_blocks,
        cfg.item_bytes,
        evals.join(", "),
        a.wrong_key,
        a.failing_f,
        a.proof_replay,
        a.store_tamper,
        a.non_claimer,
        a.non_funding_buyer
    )
}

fn run_cli(dir: &Path, name: &str, cfg: &ScenarioConfig) -> Result<(PathBuf, Output), String> {
    let config = write_config(dir, name, cfg);
    let out = dir.join(name);
    let output = yotta(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    Ok((out, output))
}

fn ctx(seed: u64) -> MarketContext {
    MarketContext::reference(Arc::new(ContentStore::in_memory()), seed)
}

fn criterion_1(dir: &Path) -> Result<String, String> {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::honest(2024, 1, 10);
    cfg.adversary = AdversaryMix {
        wrong_key: 10,
        failing_f: 10,
        ..Default::default()
    };
    let (out, output) = run_cli(dir, "c1", &cfg)?;
    ensure(output.status.code() == Some(0), || {
        format!("run exited {:?}", output.status.code())
    })?;
    let report: MarketReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let count = |o: Outcome| report.offers.iter().filter(|r| r.outcome == o).count();
    ensure(count(Outcome::Delivered) == 8, || {
        format!("{} delivered", count(Outcome::Delivered))
    })?;
    ensure(count(Outcome::Refunded) == 1, || {
        "wrong-key offer not refunded".into()
    })?;
    ensure(count(Outcome::RejectedAtVerification) == 1, || {
        "failing-F offer not rejected".into()
    })?;
    for r in &report.offers {
        let expect = match r.role {
            Adversary::Honest => Outcome::Delivered,
            Adversary::WrongKey => Outcome::Refunded,
            Adversary::FailingF => Outcome::RejectedAtVerification,
            other => return Err(format!("unexpected role {other:?}")),
        };
        ensure(r.outcome == expect, || {
            format!("{} ended {:?}", r.seller, r.outcome)
        })?;
    }

    let text = std::fs::read_to_string(out.join("ledger.log")).unwrap();
    let state = verify_log(&text).map_err(|e| e.to_string())?;
    let paid: u64 = report
        .offers
        .iter()
        .filter(|r| r.outcome == Outcome::Delivered)
        .map(|r| r.asking_price)
        .sum();
    let buyer = buyer_account(0);
    ensure(state.balance(&buyer) == cfg.budget() - paid, || {
        "buyer not refunded the remainder".into()
    })?;
    ensure(state.escrowed() == 0, || "tokens left in escrow".into())?;
    let wrong = report
        .offers
        .iter()
        .find(|r| r.role == Adversary::WrongKey)
        .unwrap();
    let entry = state
        .contracts
        .values()
        .next()
        .and_then(|c| c.entry(&wrong.seller))
        .unwrap();
    ensure(entry.status == EntryStatus::Refunded, || {
        "wrong-key entry not refunded".into()
    })?;
    let records = parse_ndjson(&text).map_err(|e| e.1)?;
    for k in 1..=records.len() {
        let s = replay(&records[..k]).map_err(|e| e.to_string())?;
        ensure(s.is_conserved(), || {
            format!("conservation fails at index {}", k - 1)
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < CRIT1_MAX, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "8 delivered, 1 refunded, 1 rejected; conserved at all {} indices; {elapsed:.2?}",
        records.len()
    ))
}

fn verify_count(o: &yotta_core::OpCounts) -> u64 {
    o.group_exps + o.hash_calls + o.verify_calls + o.aead_calls
}

fn criterion_2(_: &Path) -> Result<String, String> {
    let start = Instant::now();
    let opts = SweepOptions {
        sizes: CRIT2_SWEEP.to_vec(),
        item_bytes: 256,
        seed: 1,
        reps: CRIT2_REPS,
    };
    let sweep = run_sweep(&opts).map_err(|e| e.to_string())?;
    let speedups = sweep.speedups();
    ensure(speedups.len() == CRIT2_SWEEP.len(), || {
        "missing sweep points".into()
    })?;
    ensure(sweep.speedup_strictly_increasing(), || {
        format!("speedups not increasing: {speedups:?}")
    })?;

    let yotta: Vec<_> = CRIT2_SWEEP
        .iter()
        .map(|&n| sweep.row(System::Yotta, n, "total").unwrap().ops)
        .collect();
    for w in CRIT2_SWEEP
        .iter()
        .zip(&yotta)
        .collect::<Vec<_>>()
        .windows(2)
    {
        let ((n0, o0), (n1, o1)) = (w[0], w[1]);
        // Strictly slower than linear: per-seller count falls as n grows.
        ensure(
            verify_count(o1) * (*n0 as u64) < verify_count(o0) * (*n1 as u64),
            || {
                format!(
                    "yotta count {} at {n0} vs {} at {n1}",
                    verify_count(o0),
                    verify_count(o1)
                )
            },
        )?;
        ensure(
            o0.group_exps == o1.group_exps && o0.verify_calls == o1.verify_calls,
            || "yotta exps vary".into(),
        )?;
    }
    let one = run_baseline(1, opts.item_bytes, opts.seed)
        .map_err(|e| e.to_string())?
        .totals;
    let unit = one.exchange.ops + one.verify.ops;
    for &n in &CRIT2_SWEEP {
        let d = sweep.row(System::Dcdh, n, "total").unwrap().ops;
        let k = n as u64;
        let linear = d.group_exps == k * unit.group_exps
            && d.hash_calls == k * unit.hash_calls
            && d.verify_calls == k * unit.verify_calls
            && d.aead_calls == k * unit.aead_calls
            && d.bytes_hashed == k * unit.bytes_hashed;
        ensure(linear, || format!("baseline not exactly linear at {n}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < CRIT2_MAX, || format!("took {elapsed:?}"))?;
    let shown: Vec<String> = speedups
        .iter()
        .map(|(n, s)| format!("{n}:{s:.1}x"))
        .collect();
    Ok(format!(
        "speedup {}; yotta ops {:?}; {elapsed:.2?}",
        shown.join(" "),
        yotta.iter().map(verify_count).collect::<Vec<_>>()
    ))
}

fn criterion_3(_: &Path) -> Result<String, String> {
    let c = ctx(3);
    let eval = c.registry.resolve("min-records:1").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut sizes = Vec::new();
    let mut offers = Vec::new();
    for &bytes in &CRIT3_SIZES {
        let data = passing_dataset(&eval, bytes, &mut rng).map_err(|e| e.to_string())?;
        let p = seller_prepare(
            &*c.backend,
            &c.store,
            &c.registry,
            AccountId::new(format!("s{bytes}")),
            &data,
            eval.id(),
            1,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        ensure(
            c.backend.verify(&p.offer.statement(), &p.offer.proof) == Ok(true),
            || "proof rejected".into(),
        )?;
        sizes.push((data.len(), p.offer.proof.encode().len()));
        offers.push(p.offer);
    }
    ensure(sizes.iter().all(|s| s.1 == sizes[0].1), || {
        format!("proof sizes differ: {sizes:?}")
    })?;
    let agg1 = aggregate_offers(&*c.backend, &offers[..1]).map_err(|e| e.to_string())?;
    let agg3 = aggregate_offers(&*c.backend, &offers).map_err(|e| e.to_string())?;
    ensure(agg1.encode().len() == agg3.encode().len(), || {
        "aggregate size depends on batch".into()
    })?;
    Ok(format!(
        "proof {} bytes for data of {:?} bytes; aggregate {} bytes",
        sizes[0].1,
        sizes.iter().map(|s| s.0).collect::<Vec<_>>(),
        agg3.encode().len()
    ))
}

#[derive(Clone, Copy, Debug)]
enum Corruption {
    Commitment,
    Ciphertext,
    ContentHash,
    StoreTamper,
    ProofReplay,
    FailingData,
}

const CORRUPTIONS: [Corruption; 6] = [
    Corruption::Commitment,
    Corruption::Ciphertext,
    Corruption::ContentHash,
    Corruption::StoreTamper,
    Corruption::ProofReplay,
    Corruption::FailingData,
];

/// Builds a batch of `n` offers with the corruption applied at each set bit
/// of `mask`, then checks aggregate verification against the conjunction.
fn aggregation_case(n: usize, kinds: &[Corruption], mask: u64, seed: u64) -> Result<(), String> {
    let c = ctx(seed);
    let eval = c.registry.resolve("schema:csv:f64x2").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let make = |i: usize, good: bool, rng: &mut ChaCha20Rng| -> SellerOffer {
        let data = if good {
            passing_dataset(&eval, 48, rng)
        } else {
            failing_dataset(&eval, 48, rng)
        }
        .unwrap();
        seller_prepare(
            &*c.backend,
            &c.store,
            &c.registry,
            AccountId::new(format!("s{i}")),
            &data,
            eval.id(),
            1,
            rng,
        )
        .unwrap()
        .offer
    };
    let spare = make(99, true, &mut rng);
    let mut offers: Vec<SellerOffer> = (0..n)
        .map(|i| {
            make(
                i,
                mask & (1 << i) == 0 || !matches!(kinds[i], Corruption::FailingData),
                &mut rng,
            )
        })
        .collect();
    for (i, o) in offers.iter_mut().enumerate() {
        if mask & (1 << i) == 0 {
            continue;
        }
        match kinds[i] {
            Corruption::Commitment => o.key_commitment.0[7] ^= 0x01,
            Corruption::Ciphertext => o.ciphertext.tag[0] ^= 0x80,
            Corruption::ContentHash => o.content_hash = spare.content_hash,
            Corruption::StoreTamper => c
                .store
                .tamper(&o.content_hash, b"swapped after proving")
                .unwrap(),
            Corruption::ProofReplay => o.proof = spare.proof.clone(),
            Corruption::FailingData => {}
        }
    }
    let each: Vec<bool> = offers
        .iter()
        .map(|o| c.backend.verify(&o.statement(), &o.proof) == Ok(true))
        .collect();
    let conj = each.iter().all(|&b| b);
    ensure(conj == (mask == 0), || {
        format!("individual verdicts {each:?} for mask {mask:b} {kinds:?}")
    })?;
    let agg = aggregate_offers(&*c.backend, &offers).map_err(|e| e.to_string())?;
    let stmts: Vec<_> = offers.iter().map(SellerOffer::statement).collect();
    let agg_ok = c
        .backend
        .verify_aggregate(&stmts, &agg)
        .map_err(|e| e.to_string())?;
    ensure(agg_ok == conj, || {
        format!("aggregate {agg_ok} vs conjunction {conj} (n={n}, mask={mask:b}, {kinds:?})")
    })?;
    let ind = buyer_verify_offers(&*c.backend, &offers, None, VerificationMode::Individual);
    let ag = buyer_verify_offers(
        &*c.backend,
        &offers,
        Some(&agg),
        VerificationMode::Aggregated,
    );
    ensure(
        ind.accepted == ag.accepted && ind.rejected == ag.rejected,
        || "modes disagree".into(),
    )
}

fn criterion_4(_: &Path) -> Result<String, String> {
    let mut cases = 0;
    for n in 1..=CRIT4_EXHAUSTIVE_MAX {
        for mask in 0..(1u64 << n) {
            for kind in CORRUPTIONS {
                aggregation_case(n, &vec![kind; n], mask, cases)?;
                cases += 1;
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for t in 0..CRIT4_RANDOM_BATCHES {
        let n = rng.random_range(1..=CRIT4_RANDOM_MAX);
        let kinds: Vec<Corruption> = (0..n)
            .map(|_| CORRUPTIONS[rng.random_range(0..CORRUPTIONS.len())])
            .collect();
        // A third of the random batches are fully honest.
        let mask = if t % 3 == 0 {
            0
        } else {
            rng.random::<u64>() & ((1u64 << n) - 1)
        };
        aggregation_case(n, &kinds, mask, 10_000 + t as u64)?;
    }
    Ok(format!(
        "{cases} exhaustive and {CRIT4_RANDOM_BATCHES} random batches agree"
    ))
}

fn random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig::honest(seed, rng.random_range(1..=3), rng.random_range(2..=8));
    cfg.price = rng.random_range(1..=20);
    cfg.price_step = rng.random_range(0..=3);
    cfg.deadline_blocks = rng.random_range(1..=6);
    cfg.item_bytes = rng.random_range(16..=300);
    cfg.ledger_mode = if rng.random() {
        LedgerMode::FullDecrypt
    } else {
        LedgerMode::CommitmentOnly
    };
    cfg.verify_mode = if rng.random() {
        VerificationMode::Aggregated
    } else {
        VerificationMode::Individual
    };
    cfg.evals = vec!["schema:csv:f64x3".into(), "min-records:2".into()];
    let mut pct = || rng.random_range(0..=20);
    cfg.adversary = AdversaryMix {
        wrong_key: pct(),
        failing_f: pct(),
        proof_replay: pct(),
        store_tamper: pct(),
        non_claimer: pct(),
        non_funding_buyer: pct() * 2,
    };
    cfg
}

fn flip_hex(s: &str) -> String {
    let mut b = hex::decode(s).unwrap();
    b[0] ^= 0x01;
    hex::encode(b)
}

/// Single-record mutations of amounts, key bytes and statuses.
fn mutations(rec: &Value) -> Vec<(&'static str, Value)> {
    let mut out = Vec::new();
    let payload = &rec["payload"];
    let mut push = |what, f: &dyn Fn(&mut Value)| {
        let mut m = rec.clone();
        f(&mut m["payload"]);
        out.push((what, m));
    };
    match rec["kind"].as_str().unwrap() {
        "genesis" => {
            for k in payload["balances"].as_object().unwrap().keys() {
                push("amount", &|p: &mut Value| {
                    p["balances"][k] = Value::from(p["balances"][k].as_u64().unwrap() + 1)
                });
            }
        }
        "deploy_escrow" => {
            for j in 0..payload["entries"].as_array().unwrap().len() {
                push("amount", &|p: &mut Value| {
                    p["entries"][j]["amount"] =
                        Value::from(p["entries"][j]["amount"].as_u64().unwrap() + 1)
                });
                push("key", &|p: &mut Value| {
                    p["entries"][j]["key_commitment"] = Value::from(flip_hex(
                        p["entries"][j]["key_commitment"].as_str().unwrap(),
                    ))
                });
            }
        }
        "submit_key" => {
            push("key", &|p: &mut Value| {
                p["key"] = Value::from(flip_hex(p["key"].as_str().unwrap()))
            });
            if payload["outcome"]["status"] == "paid" {
                push("amount", &|p: &mut Value| {
                    p["outcome"]["amount"] =
                        Value::from(p["outcome"]["amount"].as_u64().unwrap() + 1)
                });
                push(
                    "status",
                    &|p: &mut Value| {
                        p["outcome"] = serde_json::json!({"status": "rejected", "reason": "key does not match"})
                    },
                );
            } else {
                push("status", &|p: &mut Value| {
                    p["outcome"] = serde_json::json!({"status": "paid", "amount": 1})
                });
            }
        }
        "refund_expired" => {
            push("amount", &|p: &mut Value| {
                p["refunded"] = Value::from(p["refunded"].as_u64().unwrap() + 1)
            });
        }
        _ => {}
    }
    out
}

fn criterion_5(dir: &Path) -> Result<String, String> {
    for seed in 0..CRIT5_SCENARIOS {
        let cfg = random_scenario(seed);
        let (out, output) = run_cli(dir, &format!("c5-{seed}"), &cfg)?;
        ensure(output.status.success(), || {
            format!("scenario {seed} run exited {:?}", output.status.code())
        })?;
        let v = yotta(&["verify-log", out.join("ledger.log").to_str().unwrap()]);
        ensure(v.status.code() == Some(0), || {
            format!("scenario {seed}: verify-log exited {:?}", v.status.code())
        })?;
    }

    let mut cfg = ScenarioConfig::honest(77, 2, 6);
    cfg.adversary = AdversaryMix {
        wrong_key: 17,
        non_claimer: 17,
        failing_f: 17,
        ..Default::default()
    };
    let (out, _) = run_cli(dir, "c5-chosen", &cfg)?;
    let lines: Vec<String> = std::fs::read_to_string(out.join("ledger.log"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    let mut counts = std::collections::BTreeMap::new();
    let file = dir.join("mutated.log");
    for (i, line) in lines.iter().enumerate() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for (what, m) in mutations(&rec) {
            let mut altered = lines.clone();
            altered[i] = serde_json::to_string(&m).unwrap();
            std::fs::write(&file, altered.join("\n") + "\n").unwrap();
            let v = yotta(&["verify-log", file.to_str().unwrap()]);
            let stdout = String::from_utf8_lossy(&v.stdout);
            ensure(v.status.code() == Some(4), || {
                format!("{what} mutation at record {i} exited {:?}", v.status.code())
            })?;
            ensure(stdout.contains(&format!("record {i}:")), || {
                format!("{what} at {i} reported as {stdout:?}")
            })?;
            *counts.entry(what).or_insert(0) += 1;
        }
    }
    for what in ["amount", "key", "status"] {
        ensure(counts.get(what).copied().unwrap_or(0) > 0, || {
            format!("no {what} mutations exercised")
        })?;
    }
    let mut truncated = lines.clone();
    truncated.pop();
    std::fs::write(&file, truncated.join("\n") + "\n").unwrap();
    ensure(
        yotta(&["verify-log", file.to_str().unwrap()]).status.code() == Some(4),
        || "truncated log accepted".into(),
    )?;
    Ok(format!(
        "{CRIT5_SCENARIOS} logs verify; mutations rejected {counts:?} over {} records",
        lines.len()
    ))
}

type MixSetter = fn(&mut AdversaryMix);

fn criterion_6(_: &Path) -> Result<String, String> {
    let kinds: [(&str, MixSetter); 6] = [
        ("wrong-key", |m| m.wrong_key = 25),
        ("failing-F", |m| m.failing_f = 25),
        ("proof-replay", |m| m.proof_replay = 25),
        ("post-proof tamper", |m| m.store_tamper = 25),
        ("non-claimer", |m| m.non_claimer = 25),
        ("non-funding buyer", |m| m.non_funding_buyer = 50),
    ];
    for (name, set) in kinds {
        for trial in 0..CRIT6_TRIALS {
            let mut cfg = ScenarioConfig::honest(trial * 31 + 7, 2, 4);
            set(&mut cfg.adversary);
            cfg.ledger_mode = if trial % 2 == 0 {
                LedgerMode::CommitmentOnly
            } else {
                LedgerMode::FullDecrypt
            };
            cfg.verify_mode = if trial % 4 < 2 {
                VerificationMode::Aggregated
            } else {
                VerificationMode::Individual
            };
            let run = run_market(&cfg, &ctx(cfg.seed))
                .map_err(|e| format!("{name} trial {trial}: {e}"))?;
            ensure(run.report.violations.is_empty(), || {
                format!("{name} trial {trial}: {:?}", run.report.violations)
            })?;
            let state = run.ledger.state();
            for (b, batch) in run.batches.iter().enumerate() {
                for (s, rec) in run.report.offers[b * cfg.sellers..(b + 1) * cfg.sellers]
                    .iter()
                    .enumerate()
                {
                    let entry = batch
                        .contract
                        .and_then(|c| state.contracts.get(&c))
                        .and_then(|c| c.entry(&rec.seller));
                    let paid = entry.is_some_and(|e| e.status == EntryStatus::Paid);
                    let delivered =
                        rec.outcome == Outcome::Delivered && rec.data_matches == Some(true);
                    // Paid exactly when delivered.
                    ensure(paid == delivered, || {
                        format!("{name} trial {trial}: buyer {b} seller {s} paid={paid} delivered={delivered}")
                    })?;
                    let key_public = entry.is_some_and(|e| e.revealed_key.is_some());
                    ensure(key_public == paid, || {
                        format!("{name} trial {trial}: key public without payment")
                    })?;
                    let adversarial = rec.role != Adversary::Honest || !batch.funds;
                    ensure(!(adversarial && paid), || {
                        format!("{name} trial {trial}: adversary paid")
                    })?;
                }
            }
            let adversaries = run
                .report
                .offers
                .iter()
                .filter(|r| r.role != Adversary::Honest)
                .count()
                + run.batches.iter().filter(|b| !b.funds).count();
            ensure(adversaries > 0, || {
                format!("{name} trial {trial}: adversary not placed")
            })?;
        }
    }
    Ok(format!(
        "6 adversaries x {CRIT6_TRIALS} trials, safety intact"
    ))
}

fn strip_timings(mut report: Value) -> Value {
    report.as_object_mut().unwrap().remove("wall_ms");
    report
}

fn ops_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{},{}", c[0], c[1], c[2], c[4], c[5])
        })
        .collect()
}

fn criterion_7(dir: &Path) -> Result<String, String> {
    let mut scenarios: Vec<ScenarioConfig> = (100..105).map(random_scenario).collect();
    let mut honest = ScenarioConfig::honest(5, 1, 10);
    honest.ledger_mode = LedgerMode::FullDecrypt;
    scenarios.push(honest);
    for (i, cfg) in scenarios.iter().enumerate() {
        let (a, _) = run_cli(dir, &format!("c7-{i}-a"), cfg)?;
        let (b, _) = run_cli(dir, &format!("c7-{i}-b"), cfg)?;
        let read = |d: &Path, f| std::fs::read(d.join(f)).unwrap();
        ensure(read(&a, "ledger.log") == read(&b, "ledger.log"), || {
            format!("scenario {i}: logs differ")
        })?;
        let ra: Value = serde_json::from_slice(&read(&a, "report.json")).unwrap();
        let rb: Value = serde_json::from_slice(&read(&b, "report.json")).unwrap();
        ensure(strip_timings(ra) == strip_timings(rb), || {
            format!("scenario {i}: reports differ")
        })?;
    }
    let csv = |name: &str| {
        let path = dir.join(name);
        let o = yotta(&[
            "bench",
            "--sweep",
            "5,20",
            "--reps",
            "1",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read_to_string(path).unwrap()
    };
    ensure(
        ops_columns(&csv("c7-a.csv")) == ops_columns(&csv("c7-b.csv")),
        || "bench op counts differ".into(),
    )?;
    Ok(format!(
        "{} scenarios and one sweep reproduce byte-for-byte",
        scenarios.len()
    ))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("fair exchange end to end", criterion_1),
        ("speedup trend and op-count scaling", criterion_2),
        ("constant proof size", criterion_3),
        ("aggregation equivalence", criterion_4),
        ("ledger auditability", criterion_5),
        ("adversary suite", criterion_6),
        ("determinism", criterion_7),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let sub = dir.path().join(format!("c{}", i + 1));
        std::fs::create_dir_all(&sub).unwrap();
        let result = catch_unwind(AssertUnwindSafe(|| check(&sub))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
