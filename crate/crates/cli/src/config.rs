//! Run-config loading: TOML file, then `BARONS_SEED`, then command-line
//! overrides, deserialized into the harness schema.

use std::fs;
use std::path::Path;

use barons::harness::RunConfig;
use barons::{Error, Result};
use toml::{Table, Value};

pub const SEED_ENV: &str = "BARONS_SEED";

/// Parses `raw` as a TOML value, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `section.key` in `table`, creating the section if needed.
pub fn set_key(table: &mut Table, dotted: &str, value: Value) -> Result<()> {
    let (section, key) = dotted
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override {dotted:?} must look like section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("{section}: expected a table"))),
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

/// Makes a relative `domain.path` in a config file relative to that file.
pub fn resolve_domain_path(table: &mut Table, base: &Path) {
    if let Some(Value::Table(domain)) = table.get_mut("domain") {
        if let Some(Value::String(p)) = domain.get_mut("path") {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
    }
}

/// Applies the seed from the environment, if set.
pub fn apply_env(table: &mut Table) -> Result<()> {
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let seed: i64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}: not an integer: {raw:?}")))?;
        set_key(table, "run.seed", Value::Integer(seed))?;
    }
    Ok(())
}

pub fn into_config(table: Table, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}
