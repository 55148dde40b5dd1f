use std::process::ExitCode;

use clap::Parser;

use tg_cli::{run, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
