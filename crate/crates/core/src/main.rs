use clap::Parser;

use mqmqe::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("mqmqe: {e}");
        std::process::exit(exit_code(&e));
    }
}
