//! Flat `key = value` run files. Each key is a long flag name; flags given on
//! the command line win because they are placed after the file's flags.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

pub const SUBCOMMANDS: [&str; 4] = ["density", "stats", "pmf", "montecarlo"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntries {
    pub command: Option<String>,
    pub flags: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<FileEntries, String> {
    let mut entries = FileEntries { command: None, flags: Vec::new() };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value, got `{line}`", lineno + 1));
        };
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if key == "command" || key == "subcommand" {
            if !SUBCOMMANDS.contains(&value) {
                return Err(format!("line {}: unknown command `{value}`", lineno + 1));
            }
            entries.command = Some(value.to_string());
            continue;
        }
        match value {
            "true" => entries.flags.push(format!("--{key}")),
            "false" => {}
            _ => entries.flags.push(format!("--{key}={value}")),
        }
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>, String> {
    let mut found = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            found = Some(it.next().cloned().ok_or("--config needs a file")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            found = Some(OsString::from(p));
        }
    }
    Ok(found)
}

/// Returns the argument list with the file's flags spliced in after the
/// subcommand, or `args` unchanged when no `--config` is given.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args).map_err(ConfigError::Invalid)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", Path::new(&path).display())))?;
    let entries = parse_config(&text).map_err(ConfigError::Invalid)?;
    let position = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut merged: Vec<OsString> = Vec::with_capacity(args.len() + entries.flags.len() + 1);
    let split = match position {
        Some(i) => {
            if let Some(c) = &entries.command {
                if args[i].to_string_lossy() != c.as_str() {
                    return Err(ConfigError::Invalid(format!(
                        "config file names command `{c}` but `{}` was given",
                        args[i].to_string_lossy()
                    )));
                }
            }
            merged.extend_from_slice(&args[..=i]);
            i + 1
        }
        None => {
            let Some(c) = &entries.command else {
                return Err(ConfigError::Invalid("no subcommand on the command line or in the config file".into()));
            };
            merged.push(args[0].clone());
            merged.push(OsString::from(c));
            1
        }
    };
    merged.extend(entries.flags.iter().map(OsString::from));
    merged.extend_from_slice(&args[split..]);
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Invalid(String),
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_keys_and_booleans() {
        let e = parse_config("# run\ncommand = stats\ngamma = 0.5\n\ndual = true\nsweep-log = false\n").unwrap();
        assert_eq!(e.command.as_deref(), Some("stats"));
        assert_eq!(e.flags, vec!["--gamma=0.5", "--dual"]);
        assert!(parse_config("gamma 0.5").is_err());
        assert!(parse_config("command = plot").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "gamma = 2\nN = 3\n").unwrap();
        let p = path.to_str().unwrap();
        let merged = merge_config(os(&["ranlase", "density", "--config", p, "--gamma", "1"])).unwrap();
        assert_eq!(merged, os(&["ranlase", "density", "--gamma=2", "--N=3", "--config", p, "--gamma", "1"]));
        fs::write(&path, "command = pmf\n").unwrap();
        let merged = merge_config(os(&["ranlase", "--config", p])).unwrap();
        assert_eq!(merged, os(&["ranlase", "pmf", "--config", p]));
        assert!(merge_config(os(&["ranlase", "density", "--config", p])).is_err());
    }

    #[test]
    fn missing_file_is_io() {
        let r = merge_config(os(&["ranlase", "density", "--config", "/nonexistent/run.cfg"]));
        assert!(matches!(r, Err(ConfigError::Io(_))));
    }
}
