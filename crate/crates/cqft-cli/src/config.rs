//! Config-file sections merged under command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const SECTIONS: &[&str] =
    &["bkar-check", "wick-check", "powercount", "cluster-demo", "rgflow", "domination", "levy", "scales", "paper-tour"];

#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
        for (key, value) in &table {
            if !SECTIONS.contains(&key.as_str()) {
                bail!("config {}: unknown section [{key}]", path.display());
            }
            if !value.is_table() {
                bail!("config {}: `{key}` must be a section", path.display());
            }
        }
        Ok(ConfigFile { table })
    }

    /// `cli` with every unset flag filled from section `name`; unknown keys are rejected.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, name: &str, cli: &T) -> Result<T> {
        let mut merged = match self.table.get(name) {
            Some(section) => serde_json::to_value(section)?,
            None => Value::Object(Default::default()),
        };
        let Value::Object(base) = &mut merged else { unreachable!("sections are tables") };
        // validate the file section on its own so errors name the file's key
        serde_json::from_value::<T>(Value::Object(base.clone())).with_context(|| format!("config section [{name}]"))?;
        if let Value::Object(flags) = serde_json::to_value(cli)? {
            for (k, v) in flags {
                if !(v.is_null() || v == Value::Bool(false)) {
                    base.insert(k, v);
                }
            }
        }
        serde_json::from_value(merged).with_context(|| format!("resolving [{name}]"))
    }
}

/// `"a..b"` as an inclusive range.
pub fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected L0..L1, got `{s}`"))?;
    let lo: u32 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let hi: u32 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("`{b}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct Demo {
        n: Option<usize>,
        seed: Option<u64>,
        #[serde(default)]
        flag: bool,
    }

    fn file(text: &str) -> ConfigFile {
        ConfigFile { table: text.parse().unwrap() }
    }

    #[test]
    fn flags_override_the_file() {
        let cfg = file("[levy]\nn = 4\nseed = 9\nflag = true\n");
        let got = cfg.resolve("levy", &Demo { n: Some(2), seed: None, flag: false }).unwrap();
        assert_eq!(got, Demo { n: Some(2), seed: Some(9), flag: true });
    }

    #[test]
    fn unknown_keys_are_named() {
        let cfg = file("[levy]\nsamples = 4\n");
        let err = format!("{:#}", cfg.resolve("levy", &Demo { n: None, seed: None, flag: false }).unwrap_err());
        assert!(err.contains("samples"), "{err}");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..6"), Ok((1, 6)));
        assert_eq!(parse_range("2..=3"), Ok((2, 3)));
        assert!(parse_range("4..1").is_err());
        assert!(parse_range("4").is_err());
    }
}
