use clap::Parser;
use neuroglm::cli::{error_json, exit_code, run, Cli, LOG_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{}", error_json(&e));
        std::process::exit(exit_code(&e));
    }
}
