//! Mints one coin, verifies it twice against an in-memory bank, and prints
//! the wire frames of the first run plus the wear on the coin.
//!
//! ```sh
//! cargo run -p qcoin --example local_demo
//! ```

use qcoin::coin::{BankLedger, Mint};
use qcoin::protocol::{run_verification, ProtocolParams};
use qcoin::qsim::RngSeed;
use qcoin::transport::encode_message;

fn main() {
    let mut mint = Mint::new(1);
    let (mut coin, record) = mint.mint(60, &mut RngSeed(7).rng()).expect("k >= 1");
    let mut ledger = BankLedger::new();
    ledger.insert(record).expect("fresh ledger");

    let params = ProtocolParams::new(15).expect("3 | 15");
    println!(
        "minted coin {} with {} registers; each verification consumes {}",
        coin.id(),
        coin.k(),
        params.selection_size()
    );

    let outcome = run_verification(&ledger, &mut coin, params, RngSeed(100), RngSeed(200));
    println!("\nfirst verification, frame by frame:");
    for message in &outcome.transcript {
        let frame = encode_message(message).expect("valid message");
        print!("  {}", String::from_utf8(frame).expect("frames are UTF-8"));
    }
    println!(
        "verdict: valid={} reason={} ({}/{} registers consumed)",
        outcome.verdict.valid,
        outcome.verdict.reason,
        coin.used_count(),
        coin.k()
    );

    let outcome = run_verification(&ledger, &mut coin, params, RngSeed(101), RngSeed(201));
    println!(
        "\nsecond verification: valid={} ({}/{} registers consumed)",
        outcome.verdict.valid,
        coin.used_count(),
        coin.k()
    );
}
