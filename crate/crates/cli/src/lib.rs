//! `covkit` command-line driver.
//!
//! Every subcommand produces one CSV table, a short human summary and an
//! exit status: 0 when all asserted invariants hold, 1 on a verification or
//! computation failure, 2 on usage, config or validation errors.

pub mod commands;
pub mod config;
pub mod params;
pub mod verify;

use std::io::Write;
use std::path::Path;

use clap::{Arg, ArgAction, ArgMatches, Command};
use clap::parser::ValueSource;
use thiserror::Error;

pub use commands::Report;
pub use config::{load_config, parse_config, ConfigFile, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("invalid value for '{field}': {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }
}

pub const SCHEMA_VERSION: u32 = 1;

fn command() -> Command {
    let mut cmd = Command::new("covkit")
        .about("Covariance toolkit: flows, generator algebras, curvature and frames")
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("configuration file (flags override its values)"),
        );
    for sub in params::SUBCOMMANDS {
        let mut sc = Command::new(sub.name).about(sub.about);
        for p in sub.all_params() {
            let help = match p.default {
                Some(d) => format!("{} [default: {d}]", p.help),
                None => p.help.to_string(),
            };
            sc = sc.arg(
                Arg::new(p.name)
                    .long(p.name)
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(help),
            );
        }
        cmd = cmd.subcommand(sc);
    }
    cmd
}

fn flags_of(sub: &params::Sub, m: &ArgMatches) -> Vec<(String, String)> {
    sub.all_params()
        .filter(|p| m.value_source(p.name) == Some(ValueSource::CommandLine))
        .filter_map(|p| m.get_one::<String>(p.name).map(|v| (p.name.to_string(), v.clone())))
        .collect()
}

/// Parses `args` (including the program name) into a validated configuration.
/// `Ok(None)` means help or version was printed.
pub fn configure(args: &[String], stdout: &mut dyn Write) -> Result<Option<RunConfig>, CliError> {
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(stdout, "{}", e.render()).map_err(|e| CliError::Io(e.to_string()))?;
                return Ok(None);
            }
            let text = e.render().to_string();
            let text = text.trim_end().trim_start_matches("error: ");
            return Err(CliError::Usage(text.to_string()));
        }
    };
    let config_path = matches.get_one::<String>("config").cloned();
    let (sub_name, flags) = match matches.subcommand() {
        Some((name, m)) => {
            let sub = params::find(name).expect("registered subcommand");
            (Some(name), flags_of(sub, m))
        }
        None => (None, Vec::new()),
    };
    let cfg = match (config_path, sub_name) {
        (Some(path), name) => load_config(Path::new(&path), name, &flags)?,
        (None, Some(name)) => RunConfig::build(params::find(name).expect("registered"), None, &flags)?,
        (None, None) => {
            return Err(CliError::Usage(
                "no subcommand given; try 'covkit --help'".into(),
            ))
        }
    };
    Ok(Some(cfg))
}

/// CSV text of a report: a `# schema=... seed=...` line, then header and rows.
pub fn render_csv(cfg: &RunConfig, report: &Report) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&report.header).map_err(CliError::compute)?;
    for row in &report.rows {
        w.write_record(row).map_err(CliError::compute)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(CliError::compute)?).map_err(CliError::compute)?;
    Ok(format!(
        "# schema={}/{} seed={}\n{body}",
        cfg.subcommand.name,
        SCHEMA_VERSION,
        cfg.seed()?
    ))
}

fn execute(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let report = commands::dispatch(cfg)?;
    let csv = render_csv(cfg, &report)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let summary: &mut dyn Write = match cfg.output() {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            stdout
        }
        None => {
            stdout.write_all(csv.as_bytes()).map_err(io)?;
            stderr
        }
    };
    for line in &report.summary {
        writeln!(summary, "{line}").map_err(io)?;
    }
    if report.failures.is_empty() {
        writeln!(summary, "{}: all checks passed", cfg.subcommand.name).map_err(io)?;
        Ok(0)
    } else {
        for f in &report.failures {
            writeln!(stderr, "FAILED: {f}").map_err(io)?;
        }
        Ok(1)
    }
}

/// Runs the tool on `args` (including the program name); returns the exit status.
pub fn run(args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = configure(args, stdout).and_then(|cfg| match cfg {
        Some(cfg) => execute(&cfg, stdout, stderr),
        None => Ok(0),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
