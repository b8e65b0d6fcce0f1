use clap::Parser;

fn main() {
    let cli = cprep::cli::Cli::parse();
    std::process::exit(cprep::cli::main_with(cli));
}
