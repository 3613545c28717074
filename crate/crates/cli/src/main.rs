use clap::Parser;
use defersched_cli::{apply_thread_cap, run, Cli};

fn main() {
    if let Err(e) = apply_thread_cap() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
