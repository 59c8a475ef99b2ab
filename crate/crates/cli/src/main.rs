use clap::Parser;
use gradgrow_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
