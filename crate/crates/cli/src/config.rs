//! Layered configuration.
//!
//! A config file is TOML restricted to scalars and arrays: top-level keys
//! apply to every subcommand, a `[subcommand]` section overrides them for
//! that subcommand. Keys are flag names; `-` and `_` are interchangeable.
//!
//! Precedence, highest first: command-line flags, `TREEFIRE_SEED` /
//! `TREEFIRE_WORKERS`, the file section, the file top level, built-in
//! defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const ENV_SEED: &str = "TREEFIRE_SEED";
pub const ENV_WORKERS: &str = "TREEFIRE_WORKERS";

#[derive(Debug, Default)]
pub struct ConfigFile {
    global: Map<String, Value>,
    sections: Map<String, Value>,
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_owned())?;
        let mut file = ConfigFile::default();
        for (key, value) in table {
            let json = serde_json::to_value(&value).map_err(|e| e.to_string())?;
            match json {
                Value::Object(section) => {
                    let section = section
                        .into_iter()
                        .map(|(k, v)| match v {
                            Value::Object(_) => Err(format!("nested table [{key}.{k}] is not supported")),
                            v => Ok((normalize(&k), v)),
                        })
                        .collect::<Result<Map<_, _>, _>>()?;
                    file.sections.insert(normalize(&key), Value::Object(section));
                }
                v => {
                    file.global.insert(normalize(&key), v);
                }
            }
        }
        Ok(file)
    }
}

fn to_map<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("config serializes") {
        Value::Object(map) => map.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => unreachable!("configs are structs"),
    }
}

/// Merges defaults, file and flags (which already carry the environment
/// overrides) into one resolved config.
pub fn resolve<T: Serialize + DeserializeOwned>(
    section: &str,
    defaults: &T,
    file: Option<&ConfigFile>,
    flags: &T,
) -> Result<T, CliError> {
    let mut merged = to_map(defaults);
    let known: BTreeSet<String> = serde_json::to_value(flags)
        .ok()
        .and_then(|v| v.as_object().map(|m| m.keys().cloned().collect()))
        .unwrap_or_default();
    if let Some(file) = file {
        for (k, v) in &file.global {
            // top-level keys may target other subcommands
            if known.contains(k) {
                merged.insert(k.clone(), v.clone());
            }
        }
        if let Some(Value::Object(sec)) = file.sections.get(&normalize(section)) {
            for (k, v) in sec {
                if !known.contains(k) {
                    return Err(CliError::Config(format!("unknown key `{k}` in section [{section}]")));
                }
                merged.insert(k.clone(), v.clone());
            }
        }
    }
    merged.extend(to_map(flags));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Config(format!("invalid configuration for {section}: {e}")))
}

/// The resolved config as TOML, for `--dry-run`.
pub fn render<T: Serialize>(section: &str, config: &T) -> String {
    let json = Value::Object(to_map(config));
    let table: toml::Table = serde_json::from_value(json).expect("resolved config is TOML-compatible");
    let mut doc = toml::Table::new();
    doc.insert(section.to_owned(), toml::Value::Table(table));
    toml::to_string(&doc).expect("table serializes")
}
