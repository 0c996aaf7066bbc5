//! `ipw-design`: design effects, sample size, power and simulation for
//! studies analyzed with IPTW-fitted marginal structural models.

mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use ipw_design::Error;
use serde_json::json;

use args::{Cli, Format};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn error_record(err: &Error) -> serde_json::Value {
    let violations = match err {
        Error::Invalid(v) => serde_json::to_value(&v.0).unwrap_or_default(),
        _ => json!([]),
    };
    json!({
        "error": err.kind(),
        "message": err.to_string(),
        "violations": violations,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match commands::run(&cli) {
        Ok(r) => r,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&error_record(&err)).unwrap_or_default()
            );
            return ExitCode::from(if err.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            });
        }
    };
    let body = match cli.format {
        Format::Text => report.text.clone(),
        Format::Json => report.to_json() + "\n",
    };
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = std::io::stdout().lock().write_all(body.as_bytes());
    if let Some(path) = &cli.out {
        if let Err(e) = std::fs::write(path, report.to_json() + "\n") {
            eprintln!("{}", error_record(&Error::Io(e)));
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    ExitCode::SUCCESS
}
