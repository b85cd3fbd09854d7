//! Flat `key=value` configuration files.
//!
//! Every key is the long name of a flag of the chosen subcommand, with `_`
//! and `-` interchangeable. The file's entries are spliced into the argument
//! list right after the subcommand name, ahead of anything typed on the
//! command line, so a flag given explicitly overrides the file.
//! `key=true` sets a switch, `key=false` leaves it unset.

use std::fs;
use std::path::Path;

/// Reads a config file into flag tokens.
pub fn file_to_args(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    parse(&text).map_err(|(line, msg)| format!("{}:{line}: {msg}", path.display()))
}

fn parse(text: &str) -> Result<Vec<String>, (usize, String)> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| (i + 1, format!("expected key=value, found `{line}`")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            return Err((i + 1, format!("bad key `{key}`")));
        }
        if key == "config" {
            return Err((i + 1, "config files cannot include other config files".into()));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// Locates `--config <path>` or `--config=<path>` in raw arguments.
pub fn find_config_flag(argv: &[String]) -> Result<Option<String>, String> {
    let mut found = None;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            found = Some(it.next().ok_or("--config needs a path")?.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(p.to_string());
        }
    }
    Ok(found)
}
