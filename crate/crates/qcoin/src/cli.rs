//! Operator entry points: mint coins, run the bank daemon, verify a held
//! coin against a bank endpoint, estimate attack acceptance rates, and
//! inspect coin or ledger files.
//!
//! Logs go to stderr, reports to stdout. `verify` exits 0 when the bank
//! accepts, 1 when it rejects, and 2 when the coin is exhausted or the
//! session broke down; flag validation happens before any side effect.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::adversary::{self, Strategy};
use crate::coin::{self, BankLedger, Mint, QCoin};
use crate::protocol::{ProtocolParams, Reason, Verdict};
use crate::qsim::RngSeed;
use crate::transport::{self, drive_holder, TcpChannel, BANK_ADDR_ENV};

/// Classically-verifiable quantum coins over a simulated two-qubit backend.
#[derive(Debug, Parser)]
#[command(name = "qcoin", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mint coins: append secret records to a ledger and write coin files.
    Mint(MintArgs),
    /// Run the bank verification service.
    Serve(ServeArgs),
    /// Verify a held coin against a bank endpoint.
    Verify(VerifyArgs),
    /// Estimate the acceptance rate of an attack strategy.
    Attack(AttackArgs),
    /// Summarize a coin or ledger file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct MintArgs {
    /// Number of two-qubit registers per coin.
    #[arg(long)]
    pub k: usize,
    /// How many coins to mint.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Ledger file to create or append to.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Directory receiving one coin file per minted coin.
    #[arg(long)]
    pub coins: PathBuf,
    /// Seed for the secret records; random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Ledger file holding the secret records.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Listen address.
    #[arg(long, env = BANK_ADDR_ENV, default_value = "127.0.0.1:7177")]
    pub listen: String,
    /// Challenge size t; each verification consumes 2t/3 registers.
    #[arg(long, default_value_t = 15)]
    pub t: usize,
    /// Seed for challenge and basis sampling; random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Coin file to verify; rewritten with burned registers after the run.
    #[arg(long)]
    pub coin: PathBuf,
    /// Bank endpoint, host:port.
    #[arg(long, env = BANK_ADDR_ENV)]
    pub bank: String,
    /// Seed for register selection and measurement; random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// One of: honest, blind, wrong-basis, replay.
    #[arg(long)]
    pub strategy: String,
    /// Challenge size t.
    #[arg(long)]
    pub t: usize,
    /// Number of independent protocol sessions to run.
    #[arg(long)]
    pub trials: u64,
    /// Seed for the whole experiment; random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InspectArgs {
    /// Coin file to summarize.
    #[arg(long)]
    pub coin: Option<PathBuf>,
    /// Ledger file to summarize.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

/// Exit status of one verification, a total function of the verdict reason.
pub fn exit_code(verdict: Verdict) -> i32 {
    match verdict.reason {
        Reason::Ok => {
            if verdict.valid {
                0
            } else {
                1
            }
        }
        Reason::UnknownCoin | Reason::BadSelection | Reason::HmpCheckFailed => 1,
        Reason::CoinExhausted | Reason::ProtocolViolation | Reason::Timeout => 2,
    }
}

const EXIT_USAGE: i32 = 2;

fn seed_or_random(seed: Option<u64>) -> RngSeed {
    let value = seed.unwrap_or_else(rand::random);
    eprintln!("seed: {value}");
    RngSeed(value)
}

fn fail(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    EXIT_USAGE
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Mint(args) => mint(args),
        Command::Serve(args) => serve(args),
        Command::Verify(args) => verify(args),
        Command::Attack(args) => attack(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn mint(args: MintArgs) -> i32 {
    if args.k == 0 {
        return fail("--k must be at least 1");
    }
    if args.count == 0 {
        return fail("--count must be at least 1");
    }

    let mut ledger = if args.ledger.exists() {
        match coin::load_ledger(&args.ledger) {
            Ok(ledger) => ledger,
            Err(e) => return fail(format!("ledger {}: {e}", args.ledger.display())),
        }
    } else {
        BankLedger::new()
    };

    let seed = seed_or_random(args.seed);
    let epoch = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_nanos() as u64;
    let mut mint = Mint::new(epoch);
    let mut rng = seed.rng();

    // Everything is validated in memory before a single byte is written.
    let mut minted: Vec<QCoin> = Vec::with_capacity(args.count);
    for _ in 0..args.count {
        let (coin, record) = match mint.mint(args.k, &mut rng) {
            Ok(pair) => pair,
            Err(e) => return fail(e),
        };
        if let Err(e) = ledger.insert(record) {
            return fail(format!("{e}; nothing written"));
        }
        minted.push(coin);
    }

    if let Err(e) = std::fs::create_dir_all(&args.coins) {
        return fail(format!("coin directory {}: {e}", args.coins.display()));
    }
    for coin in &minted {
        let path = args.coins.join(format!("{}.json", coin.id()));
        if let Err(e) = coin::save_coin(coin, &path) {
            return fail(format!("coin file {}: {e}", path.display()));
        }
        println!("{}", path.display());
    }
    if let Err(e) = coin::save_ledger(&ledger, &args.ledger) {
        return fail(format!("ledger {}: {e}", args.ledger.display()));
    }
    eprintln!(
        "minted {} coin(s) with k = {} into {}",
        args.count,
        args.k,
        args.ledger.display()
    );
    0
}

fn serve(args: ServeArgs) -> i32 {
    let params = match ProtocolParams::new(args.t) {
        Ok(params) => params,
        Err(e) => return fail(e),
    };
    let ledger = match coin::load_ledger(&args.ledger) {
        Ok(ledger) => ledger,
        Err(e) => return fail(format!("ledger {}: {e}", args.ledger.display())),
    };
    let seed = seed_or_random(args.seed);
    let server = match transport::serve_bank(Arc::new(ledger), args.listen.as_str(), params, seed.0)
    {
        Ok(server) => server,
        Err(e) => return fail(format!("bind {}: {e}", args.listen)),
    };
    eprintln!("qcoin bank listening on {}", server.local_addr());
    // The accept loop owns the process from here on.
    loop {
        std::thread::park();
    }
}

fn verify(args: VerifyArgs) -> i32 {
    let mut coin = match coin::load_coin(&args.coin) {
        Ok(coin) => coin,
        Err(e) => return fail(format!("coin {}: {e}", args.coin.display())),
    };
    let seed = seed_or_random(args.seed);
    let mut channel = match TcpChannel::connect(args.bank.as_str()) {
        Ok(channel) => channel,
        Err(e) => return fail(format!("connect {}: {e}", args.bank)),
    };

    let used_before = coin.used_count();
    let mut session = crate::protocol::HolderSession::new(&mut coin, seed);
    let result = drive_holder(&mut channel, &mut session);
    let verdict = match result {
        Ok((verdict, _)) => verdict,
        Err(e) => {
            eprintln!("session failed: {e}");
            Verdict::invalid(Reason::ProtocolViolation)
        }
    };

    // Burned registers must reach disk even when the verdict is bad; an
    // abort before any consumption leaves the file untouched.
    if coin.used_count() != used_before {
        if let Err(e) = coin::save_coin(&coin, &args.coin) {
            return fail(format!("rewriting coin {}: {e}", args.coin.display()));
        }
    }
    eprintln!(
        "coin {}: valid={} reason={} ({}/{} registers consumed)",
        coin.id(),
        verdict.valid,
        verdict.reason,
        coin.used_count(),
        coin.k()
    );
    exit_code(verdict)
}

fn attack(args: AttackArgs) -> i32 {
    let strategy: Strategy = match args.strategy.parse() {
        Ok(strategy) => strategy,
        Err(e) => return fail(e),
    };
    let params = match ProtocolParams::new(args.t) {
        Ok(params) => params,
        Err(e) => return fail(e),
    };
    if args.trials == 0 {
        return fail("--trials must be at least 1");
    }
    // Replay needs room around the challenge for the overlap to matter; the
    // other strategies are insensitive to k, so the smallest valid coin does.
    let k = match strategy {
        Strategy::Replay => 4 * params.t(),
        _ => params.t(),
    };
    let seed = seed_or_random(args.seed);
    match adversary::estimate(strategy, k, params, args.trials, seed) {
        Ok(report) => {
            println!("{}", report.to_json());
            0
        }
        Err(e) => fail(e),
    }
}

fn inspect(args: InspectArgs) -> i32 {
    if let Some(path) = args.coin {
        return inspect_coin(&path);
    }
    if let Some(path) = args.ledger {
        return inspect_ledger(&path);
    }
    fail("nothing to inspect")
}

fn inspect_coin(path: &Path) -> i32 {
    let coin = match coin::load_coin(path) {
        Ok(coin) => coin,
        Err(e) => return fail(format!("coin {}: {e}", path.display())),
    };
    println!("coin {}", coin.id());
    println!("{}/{} registers consumed", coin.used_count(), coin.k());
    0
}

fn inspect_ledger(path: &Path) -> i32 {
    let ledger = match coin::load_ledger(path) {
        Ok(ledger) => ledger,
        Err(e) => return fail(format!("ledger {}: {e}", path.display())),
    };
    println!("{} coin(s)", ledger.len());
    for record in ledger.iter() {
        println!("coin {} k={}", record.coin_id, record.k());
    }
    0
}
