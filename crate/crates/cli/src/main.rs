use clap::Parser;
use levywave_cli::args::Cli;
use levywave_cli::{execute, exit_code};

fn main() {
    // clap exits with 2 on usage errors
    let cli = Cli::parse();
    let result = execute(&cli);
    match &result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    std::process::exit(exit_code(&result));
}
