use clap::Parser;

fn main() {
    let cli = kpgen::cli::Cli::parse();
    if let Err(err) = kpgen::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
