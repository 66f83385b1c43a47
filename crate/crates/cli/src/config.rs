//! Plain-text `key = value` config files. Keys are the long flag names; a file written
//! as `run_config.txt` replays its run with `textcause --config run_config.txt`.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use textcause::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
            line: i + 1,
            message: "expected 'key = value'".into(),
        })?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(Error::Malformed {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Splices the entries of `--config FILE` into the argument list, right after the
/// subcommand. Flags given on the command line win over the file.
pub fn expand_args(argv: Vec<String>, commands: &[String]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    let prog = it.next().unwrap_or_else(|| "textcause".into());
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or_else(|| Error::invalid("--config needs a file"))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        let mut out = vec![prog];
        out.extend(rest);
        return Ok(out);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pairs = parse(&text)?;

    let file_command = pairs.iter().find(|(k, _)| k == "command").map(|(_, v)| v.clone());
    let sub_pos = rest.iter().position(|a| commands.contains(a));
    let (sub, user) = match (sub_pos, file_command) {
        (Some(p), Some(c)) if rest[p] != c => {
            return Err(Error::invalid(format!(
                "config file is for '{c}' but the command is '{}'",
                rest[p]
            )))
        }
        (Some(p), _) => {
            let sub = rest.remove(p);
            (sub, rest)
        }
        (None, Some(c)) => (c, rest),
        (None, None) => return Err(Error::invalid("no command given and the config file names none")),
    };
    let given: HashSet<String> = user
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut out = vec![prog, sub];
    for (k, v) in pairs {
        if k == "command" || given.contains(&k) {
            continue;
        }
        match v.as_str() {
            "false" | "" => {}
            "true" => out.push(format!("--{k}")),
            _ if k == "path" => out.push(v),
            _ => {
                out.push(format!("--{k}"));
                out.push(v);
            }
        }
    }
    out.extend(user);
    Ok(out)
}

/// Every option of a run, one `key = value` line each, sorted by key.
pub fn render(command: &str, args: &impl Serialize) -> Result<String> {
    let mut out = format!("command = {command}\n");
    if let Value::Object(map) = serde_json::to_value(args)? {
        for (k, v) in map {
            let v = match v {
                Value::Null => continue,
                Value::String(s) => s,
                Value::Array(items) => items
                    .iter()
                    .map(|x| match x {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    Ok(out)
}
