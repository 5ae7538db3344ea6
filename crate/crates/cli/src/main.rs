//! `salam` command-line driver.

mod args;
mod run;

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command};
use salam_core::Error;

/// Turns a JSON config object into flags. `true` becomes a bare switch,
/// `false` and `null` are dropped, arrays are comma-joined. The `command`
/// key written into report snapshots is checked against the subcommand and
/// the informational `run` object is skipped.
fn config_flags(path: &Path, command: &str) -> Result<Vec<OsString>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(format!(
            "{}: expected a JSON object",
            path.display()
        )));
    };
    let mut out = Vec::new();
    for (key, v) in map {
        if key == "command" {
            if v.as_str() != Some(command) {
                return Err(Error::Config(format!(
                    "config is for `{v}`, not `{command}`"
                )));
            }
            continue;
        }
        if key == "run" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(Error::Config(format!(
                "config key `{key}` has unsupported value {other}"
            ))),
        };
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(&other)?.into());
            }
        }
    }
    Ok(out)
}

/// Value of `--config` and the position of the subcommand, found before
/// clap runs so file values can be spliced in ahead of explicit flags.
fn locate(argv: &[OsString]) -> (Option<std::path::PathBuf>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).map(Into::into);
            i += 1;
        } else if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.into());
        } else if sub.is_none() && Command::NAMES.contains(&a.as_ref()) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

fn report(err: &Error, json_errors: bool) -> ExitCode {
    if json_errors {
        eprintln!(
            "{}",
            json!({"error": err.kind(), "message": err.to_string()})
        );
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(if err.is_external() { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut argv: Vec<OsString> = std::env::args_os().collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");

    if let (Some(path), Some(at)) = locate(&argv) {
        let command = argv[at].to_string_lossy().into_owned();
        match config_flags(&path, &command) {
            Ok(flags) => {
                argv.splice(at + 1..at + 1, flags);
            }
            Err(e) => return report(&e, json_errors),
        }
    }

    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json_errors {
                let msg = e.render().to_string();
                eprintln!("{}", json!({"error": "usage", "message": msg.trim()}));
            } else {
                let _ = e.print();
            }
            return ExitCode::from(1);
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return report(
                &Error::Config("--jobs must be positive".into()),
                cli.json_errors,
            );
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            return report(&Error::Config(e.to_string()), cli.json_errors);
        }
    }

    match run::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, cli.json_errors),
    }
}
