use clap::Parser;

fn main() {
    if let Err(e) = treecut_cli::run(treecut_cli::Cli::parse()) {
        eprintln!("treecut: {e}");
        std::process::exit(e.exit_code());
    }
}
