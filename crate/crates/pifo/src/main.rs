use clap::Parser;

fn main() {
    let cli = pifo::cli::Cli::parse();
    if let Err(e) = pifo::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
