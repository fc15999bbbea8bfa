//! `key = value` configuration files, spliced into the argument list ahead of
//! the command-line flags so that flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

/// Insert the file named by `--config` (if any) right after the subcommand.
pub fn expand(cmd: &Command, argv: Vec<String>) -> Result<Vec<String>> {
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    let Some(sub) = cmd.find_subcommand(&argv[sub_pos]) else {
        return Ok(argv);
    };
    let mut path = None;
    for (i, a) in argv.iter().enumerate().skip(sub_pos + 1) {
        if let Some(v) = a.strip_prefix("--config=") {
            path = Some(v.to_string());
        } else if a == "--config" {
            path = argv.get(i + 1).cloned();
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let tokens = file_tokens(sub, Path::new(&path))?;
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

fn file_tokens(sub: &Command, path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("config file {}", path.display()))?;
    let mut tokens = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), no + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .with_context(|| format!("{}:{}: unknown key `{key}` for `{}`", path.display(), no + 1, sub.get_name()))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                "true" | "1" => tokens.push(format!("--{key}")),
                "false" | "0" => {}
                _ => bail!("{}:{}: `{key}` takes true or false", path.display(), no + 1),
            },
            ArgAction::Append => tokens.extend(value.split(',').map(|v| format!("--{key}={}", v.trim()))),
            _ => tokens.push(format!("--{key}={value}")),
        }
    }
    Ok(tokens)
}
