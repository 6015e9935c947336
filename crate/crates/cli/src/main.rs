use std::process::ExitCode;

use clap::Parser;
use skyrmap_cli::{effective_config, run, Cli, Status};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if cli.echo_config {
        print!("{}", cfg.echo());
        return ExitCode::SUCCESS;
    }
    match run(&cfg) {
        Ok(status) => {
            println!("wrote {}", cfg.output.dir.join("report.json").display());
            if status == Status::AssertionFailed {
                eprintln!("reproduce: at least one case missed its target; see {}", cfg.output.dir.join("report.json").display());
            }
            ExitCode::from(status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
