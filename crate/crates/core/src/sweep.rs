//! Verification cost sweep: aggregated proofs against pairwise key exchange.
//!
//! The `total` row of each system is the buyer's verification work for the
//! whole batch: the aggregate check for the proof-based market, and key
//! agreement plus per-item checks for the pairwise baseline. Speedup is the
//! ratio of the two best-of-`reps` wall times.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::baseline::{run_baseline, BaselineError, BaselineReport, PHASES as BASELINE_PHASES};
use crate::config::ScenarioConfig;
use crate::metrics::{Cost, OpCounts};
use crate::protocol::{
    buyer_verify_offers, run_market, MarketContext, MarketRun, ProtocolError, VerificationMode,
};
use crate::store::ContentStore;

pub const CSV_HEADER: &str = "system,n_sellers,phase,wall_ms,ops,proof_bytes";
pub const PLOT_HEADER: &str =
    "n_sellers,log10_n,yotta_ms,dcdh_ms,log10_yotta_ms,log10_dcdh_ms,speedup";
pub const DEFAULT_SIZES: [usize; 3] = [10, 100, 1000];
pub const LARGE_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub sizes: Vec<usize>,
    pub item_bytes: usize,
    pub seed: u64,
    /// Repetitions per timed phase; the minimum is reported.
    pub reps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            sizes: DEFAULT_SIZES.to_vec(),
            item_bytes: 256,
            seed: 1,
            reps: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Yotta,
    Dcdh,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Yotta => "yotta",
            System::Dcdh => "dcdh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub system: System,
    pub n_sellers: usize,
    pub phase: &'static str,
    pub wall_ms: f64,
    pub ops: OpCounts,
    pub proof_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, system: System, n: usize, phase: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.n_sellers == n && r.phase == phase)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.n_sellers).collect();
        v.dedup();
        v
    }

    /// `(n, dcdh_total / yotta_total)` per sweep size.
    pub fn speedups(&self) -> Vec<(usize, f64)> {
        self.sizes()
            .into_iter()
            .filter_map(|n| {
                let y = self.row(System::Yotta, n, "total")?;
                let d = self.row(System::Dcdh, n, "total")?;
                Some((n, d.wall_ms / y.wall_ms))
            })
            .collect()
    }

    pub fn speedup_strictly_increasing(&self) -> bool {
        self.speedups().windows(2).all(|w| w[1].1 > w[0].1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{}",
                r.system.name(),
                r.n_sellers,
                r.phase,
                r.wall_ms,
                r.ops.to_cell(),
                r.proof_bytes
            );
        }
        out
    }

    /// Companion table for log-axis plots of the totals.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from(PLOT_HEADER);
        out.push('\n');
        for (n, s) in self.speedups() {
            let y = self
                .row(System::Yotta, n, "total")
                .map_or(0.0, |r| r.wall_ms);
            let d = self
                .row(System::Dcdh, n, "total")
                .map_or(0.0, |r| r.wall_ms);
            let _ = writeln!(
                out,
                "{n},{:.6},{y:.6},{d:.6},{:.6},{:.6},{s:.6}",
                (n as f64).log10(),
                y.log10(),
                d.log10()
            );
        }
        out
    }
}

fn min_wall(costs: impl IntoIterator<Item = Cost>) -> (OpCounts, Duration) {
    let mut it = costs.into_iter();
    let first = it.next().unwrap_or_default();
    let wall = it.fold(first.wall, |w, c| w.min(c.wall));
    (first.ops, wall)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Untimed setup for one size: an honest market run whose aggregate is
/// re-verified during the timed passes.
struct YottaSetup {
    ctx: MarketContext,
    run: MarketRun,
}

fn yotta_setup(n: usize, opts: &SweepOptions) -> Result<YottaSetup, SweepError> {
    let ctx = MarketContext::reference(Arc::new(ContentStore::in_memory()), opts.seed);
    let mut cfg = ScenarioConfig::honest(opts.seed, 1, n);
    cfg.price = 1;
    cfg.item_bytes = opts.item_bytes;
    cfg.evals = vec!["min-records:1".into()];
    cfg.verify_mode = VerificationMode::Aggregated;
    let run = run_market(&cfg, &ctx)?;
    if run.report.totals.delivered != n {
        return Err(SweepError::Invalid(format!(
            "honest run delivered {} of {n}",
            run.report.totals.delivered
        )));
    }
    Ok(YottaSetup { ctx, run })
}

fn yotta_verify_once(setup: &YottaSetup) -> Result<Cost, SweepError> {
    let batch = &setup.run.batches[0];
    let out = buyer_verify_offers(
        &*setup.ctx.backend,
        &batch.offers,
        batch.aggregate.as_ref(),
        VerificationMode::Aggregated,
    );
    if !out.rejected.is_empty() || out.cost.fallback.is_some() {
        return Err(SweepError::Invalid(
            "honest aggregate failed to verify".into(),
        ));
    }
    Ok(out.cost.total())
}

fn yotta_rows(n: usize, setup: &YottaSetup, verify: Vec<Cost>) -> Vec<SweepRow> {
    let (verify_ops, verify_wall) = min_wall(verify);
    let r = &setup.run.report;
    let phase = |names: &[&str]| -> (OpCounts, f64) {
        names.iter().fold((OpCounts::default(), 0.0), |(o, w), p| {
            (o + r.ops[*p], w + r.wall_ms[*p])
        })
    };
    let row = |phase: &'static str, (ops, wall_ms): (OpCounts, f64), proof_bytes| SweepRow {
        system: System::Yotta,
        n_sellers: n,
        phase,
        wall_ms,
        ops,
        proof_bytes,
    };
    vec![
        row("prove", phase(&["prepare"]), r.proof_bytes),
        row("aggregate", phase(&["aggregate"]), r.aggregate_bytes),
        row("verify", (verify_ops, ms(verify_wall)), r.aggregate_bytes),
        row("settle", phase(&["fund", "claim", "settle"]), 0),
        row("retrieve", phase(&["finalize"]), 0),
        row("total", (verify_ops, ms(verify_wall)), r.aggregate_bytes),
    ]
}

fn dcdh_rows(n: usize, runs: &[BaselineReport]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = BASELINE_PHASES
        .iter()
        .map(|&p| {
            let (ops, wall) = min_wall(runs.iter().map(|r| r.totals.phase(p)));
            SweepRow {
                system: System::Dcdh,
                n_sellers: n,
                phase: p,
                wall_ms: ms(wall),
                ops,
                proof_bytes: 0,
            }
        })
        .collect();
    let (ops, wall) = min_wall(runs.iter().map(|r| r.totals.exchange + r.totals.verify));
    rows.push(SweepRow {
        system: System::Dcdh,
        n_sellers: n,
        phase: "total",
        wall_ms: ms(wall),
        ops,
        proof_bytes: 0,
    });
    rows
}

pub fn run_sweep(opts: &SweepOptions) -> Result<SweepResult, SweepError> {
    if opts.sizes.is_empty() || opts.sizes.contains(&0) {
        return Err(SweepError::Invalid("sizes must be positive".into()));
    }
    if opts.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SweepError::Invalid(
            "sizes must be strictly increasing".into(),
        ));
    }
    if opts.item_bytes == 0 || opts.reps == 0 {
        return Err(SweepError::Invalid(
            "item size and repetitions must be positive".into(),
        ));
    }
    let setups: Vec<YottaSetup> = opts
        .sizes
        .iter()
        .map(|&n| yotta_setup(n, opts))
        .collect::<Result<_, _>>()?;
    let mut verify: Vec<Vec<Cost>> = vec![Vec::new(); opts.sizes.len()];
    let mut baseline: Vec<Vec<BaselineReport>> = vec![Vec::new(); opts.sizes.len()];
    // Repetitions are interleaved across sizes so slow drift in machine
    // speed affects every size alike.
    for _ in 0..opts.reps {
        for (i, &n) in opts.sizes.iter().enumerate() {
            verify[i].push(yotta_verify_once(&setups[i])?);
            let b = run_baseline(n, opts.item_bytes, opts.seed)?;
            if b.delivered != n {
                return Err(SweepError::Invalid(format!(
                    "baseline delivered {} of {n}",
                    b.delivered
                )));
            }
            baseline[i].push(b);
        }
    }
    let mut rows = Vec::new();
    for (i, &n) in opts.sizes.iter().enumerate() {
        rows.extend(yotta_rows(n, &setups[i], std::mem::take(&mut verify[i])));
        rows.extend(dcdh_rows(n, &baseline[i]));
    }
    Ok(SweepResult { rows })
}
