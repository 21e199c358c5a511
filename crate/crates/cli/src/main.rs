use clap::Parser;

fn main() {
    let cli = babel_cli::Cli::parse();
    if let Err(e) = babel_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
