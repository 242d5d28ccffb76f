use clap::Parser;
use ddae::cli::{run, Cli};

fn main() {
    // optional cap on worker threads for reproducible environments
    if let Ok(threads) = std::env::var("DDAE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    let raw_args: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(err) = run(cli, raw_args) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
