use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use yotta_core::ledger::{verify_log, LedgerError};
use yotta_core::protocol::{run_market, MarketContext, ProtocolError};
use yotta_core::store::ContentStore;
use yotta_core::sweep::{run_sweep, SweepOptions, LARGE_SIZE};
use yotta_core::{LedgerMode, ScenarioConfig, VerificationMode};

const EXIT_INVALID: u8 = 2;
const EXIT_UNFAIR: u8 = 3;
const EXIT_BAD_LOG: u8 = 4;

#[derive(Parser)]
#[command(name = "yotta", version, about = "Fair data exchange market runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a market scenario and write report.json and ledger.log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<LedgerMode>,
        #[arg(long)]
        verify: Option<VerificationMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// File-backed content store; overrides YOTTA_STORE_DIR.
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
    /// Compare verification cost against the pairwise baseline.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        sweep: Vec<usize>,
        #[arg(long)]
        include_10k: bool,
        #[arg(long, default_value_t = 256)]
        item_size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a ledger log and report the first divergent record.
    VerifyLog { file: PathBuf },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn write(path: &Path, text: &str) -> Result<(), ExitCode> {
    std::fs::write(path, text).map_err(|e| {
        fail(
            EXIT_INVALID,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

fn run(
    config: &Path,
    seed: Option<u64>,
    mode: Option<LedgerMode>,
    verify: Option<VerificationMode>,
    out: &Path,
    store_dir: Option<&Path>,
) -> Result<ExitCode, ExitCode> {
    let mut cfg = ScenarioConfig::load(config).map_err(|e| fail(EXIT_INVALID, e))?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.ledger_mode = mode.unwrap_or(cfg.ledger_mode);
    cfg.verify_mode = verify.unwrap_or(cfg.verify_mode);
    let store = match store_dir {
        Some(dir) => ContentStore::open_dir(dir),
        None => ContentStore::from_env(),
    }
    .map_err(|e| fail(EXIT_INVALID, e))?;
    let ctx = MarketContext::reference(Arc::new(store), cfg.seed);
    let result = match run_market(&cfg, &ctx) {
        Ok(r) => r,
        Err(e @ ProtocolError::InvalidConfig(_)) => return Err(fail(EXIT_INVALID, e)),
        Err(e) => return Err(fail(EXIT_UNFAIR, e)),
    };
    std::fs::create_dir_all(out).map_err(|e| {
        fail(
            EXIT_INVALID,
            format!("cannot create {}: {e}", out.display()),
        )
    })?;
    let report = serde_json::to_string_pretty(&result.report).expect("serializable");
    write(&out.join("report.json"), &report)?;
    write(&out.join("ledger.log"), &result.ledger.to_ndjson())?;

    let t = &result.report.totals;
    println!(
        "offers={} delivered={} refunded={} rejected={} unfunded={} integrity_failures={} paid={}",
        t.offers,
        t.delivered,
        t.refunded,
        t.rejected_at_verification,
        t.unfunded,
        t.integrity_failures,
        t.tokens_paid
    );
    if result.report.violations.is_empty() {
        println!("fair exchange: ok");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &result.report.violations {
            eprintln!("violation: {v}");
        }
        Ok(ExitCode::from(EXIT_UNFAIR))
    }
}

fn bench(opts: SweepOptions, out: &Path) -> Result<ExitCode, ExitCode> {
    let result = run_sweep(&opts).map_err(|e| fail(EXIT_INVALID, e))?;
    write(out, &result.to_csv())?;
    let plot = out.with_extension("plot.csv");
    write(&plot, &result.to_plot_csv())?;
    println!(
        "{:>10} {:>12} {:>12} {:>10}",
        "n_sellers", "yotta_ms", "dcdh_ms", "speedup"
    );
    for (n, s) in result.speedups() {
        let ms = |sys| result.row(sys, n, "total").map_or(0.0, |r| r.wall_ms);
        println!(
            "{n:>10} {:>12.3} {:>12.3} {s:>10.2}",
            ms(yotta_core::sweep::System::Yotta),
            ms(yotta_core::sweep::System::Dcdh)
        );
    }
    println!("wrote {} and {}", out.display(), plot.display());
    Ok(ExitCode::SUCCESS)
}

fn audit(file: &Path) -> Result<ExitCode, ExitCode> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| fail(EXIT_INVALID, format!("cannot read {}: {e}", file.display())))?;
    match verify_log(&text) {
        Ok(state) => {
            println!(
                "ok: {} contracts, height {}",
                state.contracts.len(),
                state.height
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(LedgerError::CorruptLog { index, reason }) => {
            println!("diverges at record {index}: {reason}");
            Ok(ExitCode::from(EXIT_BAD_LOG))
        }
        Err(e) => {
            println!("invalid log: {e}");
            Ok(ExitCode::from(EXIT_BAD_LOG))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            mode,
            verify,
            out,
            store_dir,
        } => run(&config, seed, mode, verify, &out, store_dir.as_deref()),
        Command::Bench {
            mut sweep,
            include_10k,
            item_size,
            seed,
            reps,
            out,
        } => {
            if include_10k && !sweep.contains(&LARGE_SIZE) {
                sweep.push(LARGE_SIZE);
            }
            bench(
                SweepOptions {
                    sizes: sweep,
                    item_bytes: item_size,
                    seed,
                    reps,
                },
                &out,
            )
        }
        Command::VerifyLog { file } => audit(&file),
    };
    result.unwrap_or_else(|code| code)
}
