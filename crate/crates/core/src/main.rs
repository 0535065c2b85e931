use clap::Parser;

fn main() {
    let cli = diagtomo::cli::Cli::parse();
    std::process::exit(diagtomo::cli::run(cli));
}
