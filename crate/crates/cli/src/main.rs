use clap::Parser;

fn main() {
    std::process::exit(rscm_cli::run(rscm_cli::Cli::parse()));
}
