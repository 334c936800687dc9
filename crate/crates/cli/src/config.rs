//! Flat `key=value` run configuration.
//!
//! Each subcommand declares a schema of keys with defaults. Values come from
//! the defaults, then an optional config file, then command-line flags; the
//! resolved map is echoed next to the run's outputs and can be fed back with
//! `--config` to repeat the run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};

/// A user-facing configuration problem.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default: Some(default), help }
}

pub const fn required(name: &'static str, help: &'static str) -> Key {
    Key { name, default: None, help }
}

/// Adds one `--name VALUE` flag per schema key.
pub fn with_flags(mut cmd: Command, schema: &[Key]) -> Command {
    for k in schema {
        let help = match k.default {
            Some("") => k.help.to_string(),
            Some(d) => format!("{} [default: {d}]", k.help),
            None => format!("{} [required]", k.help),
        };
        cmd = cmd.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(help));
    }
    cmd
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_text(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(bad(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(bad(format!("config line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(out)
}

/// Resolved parameters of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn resolve(schema: &[Key], file: Option<&Path>, matches: &ArgMatches) -> anyhow::Result<Params> {
        let mut values: BTreeMap<String, String> =
            schema.iter().filter_map(|k| k.default.map(|d| (k.name.to_string(), d.to_string()))).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_text(&text)? {
                if !schema.iter().any(|s| s.name == k) {
                    return Err(bad(format!("unknown config key `{k}`")));
                }
                values.insert(k, v);
            }
        }
        for k in schema {
            if matches.value_source(k.name) == Some(ValueSource::CommandLine) {
                let v: &String = matches.get_one(k.name).expect("flag present");
                if v.contains('\n') {
                    return Err(bad(format!("value of `{}` spans several lines", k.name)));
                }
                values.insert(k.name.to_string(), v.trim().to_string());
            }
        }
        if let Some(k) = schema.iter().find(|k| !values.contains_key(k.name)) {
            return Err(bad(format!("missing required key `{}`", k.name)));
        }
        Ok(Params { values })
    }

    #[cfg(test)]
    pub fn from_map(values: BTreeMap<String, String>) -> Params {
        Params { values }
    }

    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` missing from schema"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.str(key);
        raw.parse().map_err(|e| bad(format!("invalid value `{raw}` for `{key}`: {e}")))
    }

    /// Empty values mean "not given".
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.str(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn require_path(&self, key: &str) -> anyhow::Result<PathBuf> {
        self.path(key).ok_or_else(|| bad(format!("`{key}` must name a file")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> anyhow::Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| bad(format!("invalid entry `{s}` in `{key}`: {e}"))))
            .collect()
    }
}

/// Parses `a..b` (inclusive) or a comma list.
pub fn parse_grid(raw: &str) -> anyhow::Result<Vec<f64>> {
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b): (i64, i64) = (
            a.trim().parse().map_err(|_| bad(format!("bad range start in `{raw}`")))?,
            b.trim().parse().map_err(|_| bad(format!("bad range end in `{raw}`")))?,
        );
        if a > b {
            return Err(bad(format!("empty range `{raw}`")));
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    let values: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("bad grid value `{s}`"))))
        .collect::<anyhow::Result<_>>()?;
    if values.is_empty() {
        return Err(bad("empty grid"));
    }
    Ok(values)
}
