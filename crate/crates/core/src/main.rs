use std::process::ExitCode;

use clap::Parser;

use a3sim::cli::{run, Args};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("A3SIM_LOG", "warn")).init();
    let args = Args::parse();
    let code = run(&args, &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
