use attrition_cli::commands::{execute, Cli};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(msg) => print!("{msg}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
