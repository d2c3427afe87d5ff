use clap::Parser;
use crowdscreen_service::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
