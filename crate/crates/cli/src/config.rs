//! `--config FILE`: a JSON object of flag values spliced into the argument
//! list right after the subcommand, so later command-line flags override it.

use std::path::Path;

use serde_json::Value;

use crate::{CliError, CliResult};

const COMMANDS: [&str; 4] = ["constants", "tails", "transform", "limit"];

pub(crate) fn expand(args: &[String]) -> CliResult<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| CliError::usage("--config needs a file"))?.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let (command, flags) = load(Path::new(&path))?;
    let pos = rest.iter().position(|a| COMMANDS.contains(&a.as_str()));
    let pos = match (pos, command) {
        (Some(p), Some(c)) if rest[p] != c => {
            return Err(CliError::usage(format!("config is for {c:?} but the command is {:?}", rest[p])));
        }
        (Some(p), _) => p + 1,
        (None, Some(c)) => {
            // global flags are accepted after the subcommand too
            let at = 1.min(rest.len());
            rest.insert(at, c);
            at + 1
        }
        (None, None) => return Err(CliError::usage("no subcommand given on the command line or in the config")),
    };
    rest.splice(pos..pos, flags);
    Ok(rest)
}

fn load(path: &Path) -> CliResult<(Option<String>, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let Value::Object(map) = value else {
        return Err(CliError::usage("config file must hold a JSON object"));
    };
    let mut command = None;
    let mut flags = Vec::new();
    for (key, v) in map {
        if key == "command" {
            match v {
                Value::String(s) => command = Some(s),
                _ => return Err(CliError::usage("config \"command\" must be a string")),
            }
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => flags.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?;
                flags.push(format!("{flag}={}", parts.join(",")));
            }
            other => flags.push(format!("{flag}={}", scalar(&other)?)),
        }
    }
    Ok((command, flags))
}

fn scalar(v: &Value) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(CliError::usage(format!("unsupported config value {other}"))),
    }
}
