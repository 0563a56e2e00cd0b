use clap::Parser;

fn main() {
    let cli = qcoin::cli::Cli::parse();
    std::process::exit(qcoin::cli::run(cli));
}
