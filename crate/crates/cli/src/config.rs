use std::fs;

use crate::{usage, CliError, CliResult};

/// Parses a `key = value` file into `--key=value` arguments. Blank lines and
/// everything after `#` are ignored; underscores in keys become dashes.
pub fn parse(text: &str) -> CliResult<Vec<String>> {
    let mut args = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!("config line {}: expected `key = value`", n + 1)));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(usage(format!("config line {}: bad key `{}`", n + 1, key)));
        }
        if key == "config" {
            return Err(usage(format!(
                "config line {}: config files cannot include others",
                n + 1
            )));
        }
        args.push(format!("--{key}={}", value.trim()));
    }
    Ok(args)
}

/// Replaces `--config FILE` after the subcommand by the file's settings,
/// placed ahead of the command-line flags so that those override them.
pub fn expand(mut args: Vec<String>) -> CliResult<Vec<String>> {
    if args.len() < 2 || args[1].starts_with('-') {
        return Ok(args);
    }
    let mut path = None;
    let mut j = 2;
    while j < args.len() {
        if args[j] == "--" {
            break;
        }
        if args[j] == "--config" {
            let Some(p) = args.get(j + 1).cloned() else {
                return Err(usage("--config needs a file path"));
            };
            args.drain(j..j + 2);
            path = Some(p);
        } else if let Some(p) = args[j].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(j);
        } else {
            j += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let settings = parse(&text)?;
    args.splice(2..2, settings);
    Ok(args)
}
