//! Flat key = value configuration with command-line overrides.
//!
//! A config file holds one `key = value` pair per line (# comments allowed);
//! command-line `--key value` pairs override it. Every consumed key must be
//! recognised by the command: unknown keys are hard errors so typos cannot
//! silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parse `--key value` pairs; bare boolean flags take the value "true".
    /// A `--config FILE` pair loads the file first, keeping command-line
    /// values as overrides.
    pub fn from_args(args: &[String], allowed: &[&str]) -> Result<Self, CliError> {
        let mut cli = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected --key, got {arg:?}")))?
                .replace('-', "_");
            let value = match args.get(i + 1) {
                Some(v) if !v.starts_with("--") => {
                    i += 2;
                    v.clone()
                }
                _ => {
                    i += 1;
                    "true".to_string()
                }
            };
            cli.insert(key, value);
        }

        let mut values = BTreeMap::new();
        if let Some(path) = cli.get("config") {
            values = parse_config_file(Path::new(path))?;
        }
        values.extend(cli);
        values.remove("config");

        for key in values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown configuration key {key:?}; recognised keys: {}",
                    allowed.join(", ")
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse --{key} value {raw:?}"))),
        }
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("cannot parse --{key} value {raw:?}"))),
        }
    }

    pub fn parse_bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => Err(CliError::Usage(format!(
                "--{key} expects true/false, got {other:?}"
            ))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|part| part.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("cannot parse --{key} list {raw:?}"))),
        }
    }

    /// The fully-resolved key/value map, for the run log.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut values = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            )));
        };
        values.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(values)
}
