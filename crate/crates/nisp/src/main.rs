use clap::Parser;

use nisp::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("nisp: {}", e);
        std::process::exit(e.exit_code());
    }
}
