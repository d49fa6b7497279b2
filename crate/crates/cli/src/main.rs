use std::process::ExitCode;

use clap::Parser;
use qtwtt_cli::commands::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("QTWTT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
