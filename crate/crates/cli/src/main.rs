use clap::Parser;

fn main() {
    let cli = maghelm_cli::Cli::parse();
    std::process::exit(maghelm_cli::main_with(cli));
}
