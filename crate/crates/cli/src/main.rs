use clap::Parser;
use tetraproj_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("tetraproj: {e}");
        std::process::exit(e.exit_code());
    }
}
