use clap::Parser;

fn main() {
    let cli = ties::cli::Cli::parse();
    std::process::exit(ties::cli::main_with(cli));
}
