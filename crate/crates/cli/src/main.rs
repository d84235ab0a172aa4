use clap::Parser;

fn main() {
    let cli = poa_cli::Cli::parse();
    std::process::exit(poa_cli::run(cli));
}
