use clap::Parser;

fn main() {
    let cli = poolal::Cli::parse();
    if let Err(e) = poolal::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
