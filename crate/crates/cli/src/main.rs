use clap::Parser;

fn main() {
    let cli = fairauc_cli::Cli::parse();
    if let Err(e) = fairauc_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
