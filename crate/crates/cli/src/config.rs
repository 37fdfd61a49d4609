//! Flat `key = value` training configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;

use crate::usage;

const KEYS: &[&str] = &[
    "lr",
    "momentum",
    "weight-decay",
    "batch",
    "epochs",
    "cd-steps",
    "learn-sigma",
    "init-std",
    "seed",
    "eval-every",
    "em-iters",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Blank lines and `#` comments are skipped; underscores in keys are
    /// read as dashes.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(usage(format!("config line {}: unknown key `{}`", n + 1, k.trim())));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| usage(format!("config key `{key}`: bad value `{v}`")))
            })
            .transpose()
    }
}
