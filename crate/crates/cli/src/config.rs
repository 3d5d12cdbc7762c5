//! Versioned TOML run files and `key=value` overrides.

use std::path::{Path, PathBuf};

use cbou_core::cbo_loop::{ExperimentConfig, Method, PosteriorDemoConfig};
use cbou_core::scm::BUILTIN_NAMES;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

/// Contents of a `run` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub config_version: u32,
    /// Methods to compare; when empty, `experiment.method` alone.
    #[serde(default)]
    pub methods: Vec<Method>,
    /// Number of consecutive seeds starting at `experiment.seed`.
    #[serde(default = "one")]
    pub seeds: usize,
    /// Explicit seeds; takes precedence over `seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

/// Contents of a `posterior-demo` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFile {
    pub config_version: u32,
    #[serde(default = "ten")]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub demo: PosteriorDemoConfig,
}

impl RunFile {
    pub fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            vec![self.experiment.method]
        } else {
            self.methods.clone()
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        seeds_from(&self.seed_list, self.experiment.seed, self.seeds)
    }
}

impl DemoFile {
    pub fn seed_list(&self) -> Vec<u64> {
        seeds_from(&self.seed_list, self.demo.seed, self.seeds)
    }
}

fn seeds_from(list: &Option<Vec<u64>>, base: u64, count: usize) -> Vec<u64> {
    match list {
        Some(l) => l.clone(),
        None => (0..count as u64).map(|i| base + i).collect(),
    }
}

/// Reads a config file into a table; with no path, a minimal valid one.
pub fn read_table(path: Option<&Path>) -> Result<Table, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?,
        None => format!("config_version = {CONFIG_VERSION}\n"),
    };
    text.parse::<Table>()
        .map_err(|e| CliError::config(format!("config is not valid TOML: {e}")))
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string so that `--set scm.name=toy` works without quotes.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted key, creating intermediate tables. Keys that are not
/// top-level fields of the file are placed under `section`.
pub fn set_key(
    table: &mut Table,
    key: &str,
    value: Value,
    top_level: &[&str],
    section: &str,
) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("malformed override key `{key}`")));
    }
    if !top_level.contains(&parts[0]) {
        parts.insert(0, section);
    }
    let (last, path) = parts.split_last().expect("key has at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn apply_sets(
    table: &mut Table,
    sets: &[String],
    top_level: &[&str],
    section: &str,
) -> Result<(), CliError> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{s}` is not KEY=VALUE")))?;
        set_key(table, k.trim(), parse_value(v.trim()), top_level, section)?;
    }
    Ok(())
}

/// `--scm` accepts a builtin name or a path to a spec file.
pub fn scm_value(arg: &str) -> Value {
    let mut t = Table::new();
    if BUILTIN_NAMES.contains(&arg) {
        t.insert("kind".into(), Value::String("builtin".into()));
        t.insert("name".into(), Value::String(arg.into()));
    } else {
        t.insert("kind".into(), Value::String("spec-file".into()));
        t.insert("path".into(), Value::String(arg.into()));
    }
    Value::Table(t)
}

pub fn finish<T: DeserializeOwned>(table: Table) -> Result<T, CliError> {
    match table.get("config_version") {
        None => return Err(CliError::config("missing `config_version`")),
        Some(Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
        Some(v) => {
            return Err(CliError::config(format!(
                "unsupported config_version {v}; this build reads {CONFIG_VERSION}"
            )))
        }
    }
    T::deserialize(table).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

pub const RUN_TOP_LEVEL: &[&str] = &[
    "config_version",
    "methods",
    "seeds",
    "seed_list",
    "output_dir",
    "experiment",
];

pub const DEMO_TOP_LEVEL: &[&str] = &[
    "config_version",
    "seeds",
    "seed_list",
    "output_dir",
    "demo",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_land_under_the_section() {
        let mut t = read_table(None).unwrap();
        apply_sets(
            &mut t,
            &["n_obs=500".into(), "dr.bootstrap_count=7".into(), "seeds=3".into()],
            RUN_TOP_LEVEL,
            "experiment",
        )
        .unwrap();
        let f: RunFile = finish(t).unwrap();
        assert_eq!(f.experiment.n_obs, 500);
        assert_eq!(f.experiment.dr.bootstrap_count, 7);
        assert_eq!(f.seed_list(), vec![0, 1, 2]);
    }

    #[test]
    fn bare_strings_are_accepted() {
        assert_eq!(parse_value("cbo-u"), Value::String("cbo-u".into()));
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("[1, 2]").as_array().unwrap().len(), 2);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let mut t = read_table(None).unwrap();
        apply_sets(&mut t, &["bogus=1".into()], RUN_TOP_LEVEL, "experiment").unwrap();
        assert!(finish::<RunFile>(t).is_err());
        let t: Table = "config_version = 2".parse().unwrap();
        assert!(finish::<RunFile>(t).is_err());
        assert!(finish::<RunFile>(Table::new()).is_err());
    }
}
