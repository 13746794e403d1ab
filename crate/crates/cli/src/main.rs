use clap::Parser;
use vh_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let result = run(kind, args);
    match &result {
        Ok(o) => eprintln!("{}: {}", o.name, if o.pass { "pass" } else { "FAIL" }),
        Err(e) => eprintln!("error: {e}"),
    }
    std::process::exit(exit_code(&result));
}
