//! Flat `key = value` config files merged under command-line flags.
//!
//! Keys are the long flag names of the chosen subcommand (`_` and `-` are
//! interchangeable). Flags that take several values may repeat their key.
//! Boolean flags accept `true` or `false`.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, CommandFactory, FromArgMatches};

use crate::Cli;

pub enum ParseFailure {
    Clap(clap::Error),
    Config(String),
}

impl From<clap::Error> for ParseFailure {
    fn from(e: clap::Error) -> Self {
        ParseFailure::Clap(e)
    }
}

pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("{}:{}: empty key", path.display(), i + 1));
        }
        out.push((i + 1, key, v.trim().to_string()));
    }
    Ok(out)
}

fn leaf(matches: &ArgMatches, cmd: &clap::Command) -> (ArgMatches, clap::Command) {
    let mut m = matches.clone();
    let mut c = cmd.clone();
    while let Some((name, sub)) = m.subcommand() {
        let next = c.find_subcommand(name).expect("matched subcommand exists").clone();
        m = sub.clone();
        c = next;
    }
    (m, c)
}

/// Parses `raw`, then re-parses with config-file entries appended for every
/// flag the command line left unset.
pub fn parse_with_config(raw: Vec<OsString>) -> Result<Cli, ParseFailure> {
    let mut cmd = Cli::command();
    cmd.build();
    let matches = cmd.clone().try_get_matches_from(&raw)?;
    let (leaf_m, leaf_c) = leaf(&matches, &cmd);
    let Some(path) = leaf_m.get_one::<std::path::PathBuf>("config").cloned() else {
        return Ok(Cli::from_arg_matches(&matches)?);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| ParseFailure::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let entries = parse_entries(&text, &path).map_err(ParseFailure::Config)?;

    let mut extra: Vec<OsString> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for (line, key, value) in entries {
        let arg = leaf_c
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| {
                ParseFailure::Config(format!(
                    "{}:{line}: unknown key `{key}` for `{}`",
                    path.display(),
                    leaf_c.get_name()
                ))
            })?;
        let id = arg.get_id().as_str();
        if leaf_m.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let repeatable = matches!(arg.get_action(), ArgAction::Append);
        if seen.contains(&key) && !repeatable {
            return Err(ParseFailure::Config(format!(
                "{}:{line}: key `{key}` given more than once",
                path.display()
            )));
        }
        seen.push(key.clone());
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => extra.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(ParseFailure::Config(format!(
                        "{}:{line}: `{key}` takes true or false",
                        path.display()
                    )))
                }
            },
            _ => extra.push(format!("--{key}={value}").into()),
        }
    }
    let mut merged = raw;
    merged.extend(extra);
    Ok(<Cli as clap::Parser>::try_parse_from(merged)?)
}
