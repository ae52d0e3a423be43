use clap::Parser;

fn main() {
    let cli = fairaudit::cli::Cli::parse();
    if let Err(e) = fairaudit::commands::run(cli) {
        eprintln!("fairaudit: {e}");
        std::process::exit(e.exit_code());
    }
}
