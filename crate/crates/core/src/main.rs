use clap::Parser;

fn main() {
    let cli = bns_core::cli::Cli::parse();
    std::process::exit(bns_core::cli::run(cli));
}
