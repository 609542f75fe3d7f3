use clap::Parser;

fn main() {
    let cli = parcon_cli::Cli::parse();
    std::process::exit(parcon_cli::execute(&cli));
}
