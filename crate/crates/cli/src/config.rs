use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::error::CliError;

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

fn mentions(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&prefix))
}

/// Path given to `--config`, if any.
fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(CliError::Usage(format!("config key '{key}': expected a boolean, got '{other}'"))),
    }
}

/// Appends the config file's settings as flags for every key not already
/// given on the command line.
pub fn merge_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config file {path}: {e}")))?;
    let entries = warpfda::theory::parse_key_values(&text).map_err(|e| CliError::Usage(format!("config file {path}: {e}")))?;

    let root = Cli::command();
    let sub = argv
        .iter()
        .skip(1)
        .find_map(|a| root.get_subcommands().find(|s| s.get_name() == a))
        .ok_or_else(|| CliError::Usage("no subcommand given".into()))?;

    let mut extra = Vec::new();
    for (raw_key, value) in entries {
        let key = normalize(&raw_key);
        if key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key '{raw_key}' for '{}'", sub.get_name())))?;
        if mentions(&argv, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(format!("--{key}"));
            extra.push(value);
        } else if parse_bool(&raw_key, &value)? {
            extra.push(format!("--{key}"));
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

pub fn args_as_strings(args: impl IntoIterator<Item = OsString>) -> Result<Vec<String>, CliError> {
    args.into_iter()
        .map(|a| a.into_string().map_err(|a| CliError::Usage(format!("argument is not UTF-8: {a:?}"))))
        .collect()
}

/// The arguments recorded in manifests: everything after the program name
/// except worker-count and config-file flags.
pub fn recorded_arguments(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--threads" || a == "--config" {
            it.next();
            continue;
        }
        if a.starts_with("--threads=") || a.starts_with("--config=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}
