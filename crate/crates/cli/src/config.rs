//! `key = value` configuration files. A key names a long flag of the
//! subcommand being run; values from the file fill in flags that were not
//! given on the command line.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

use crate::CliError;

pub fn read(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        entries.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(entries)
}

/// The innermost subcommand that was invoked, with its matches.
fn leaf<'a>(cmd: &'a Command, matches: &'a ArgMatches) -> (&'a Command, &'a ArgMatches) {
    match matches.subcommand() {
        Some((name, sub)) => {
            let sub_cmd = cmd.find_subcommand(name).expect("matched subcommand exists");
            leaf(sub_cmd, sub)
        }
        None => (cmd, matches),
    }
}

/// Extra arguments that apply `entries` to every flag the user left at its
/// default. Appending them after the original arguments attaches them to
/// the innermost subcommand.
pub fn extra_args(
    cmd: &Command,
    matches: &ArgMatches,
    entries: &[(String, String)],
) -> Result<Vec<OsString>, CliError> {
    let (leaf_cmd, leaf_matches) = leaf(cmd, matches);
    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = leaf_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "config key `{key}` is not an option of `{}`",
                    leaf_cmd.get_name()
                ))
            })?;
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let given = leaf_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine);
        if given {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "yes" | "1" => extra.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" => {}
                _ => return Err(CliError::Usage(format!("config key `{key}` expects true or false"))),
            },
            _ => extra.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    Ok(extra)
}
