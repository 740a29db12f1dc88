//! Plain-text key=value configuration with flag override.
//!
//! Flags win over file values; unknown file keys are errors; the effective
//! configuration is echoed into every output header for provenance.

use anyhow::{bail, Context};
use std::collections::BTreeMap;

pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "alpha0",
    "r0",
    "beta",
    "gamma",
    "grid_resolution",
    "dim",
    "window",
    "seed",
    "mode",
    "reps",
    "out",
    "report",
    "distances",
    "n",
    "functional",
    "variant",
    "algo",
    "perturb_box",
    "route",
    "boundary",
    "in",
    "n_max",
];

/// Parse a `key = value` file (one pair per line, `#` comments).
pub fn parse_config_file(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key = value", ln + 1))?;
        let key = k.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key '{}'", ln + 1, key);
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("line {}: duplicate key '{}'", ln + 1, key);
        }
    }
    Ok(map)
}

/// Merged configuration: file values overlaid by flag values.
#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: Option<&str>) -> anyhow::Result<Self> {
        let map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config file {p}"))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(RunConfig { map })
    }

    /// Flags override file values.
    pub fn set_flag(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> anyhow::Result<&str> {
        self.get(key)
            .with_context(|| format!("missing required option '{key}' (flag or config file)"))
    }

    pub fn get_f64(&self, key: &str) -> anyhow::Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => Ok(Some(
                v.parse()
                    .with_context(|| format!("option '{key}': bad number '{v}'"))?,
            )),
        }
    }

    pub fn require_f64(&self, key: &str) -> anyhow::Result<f64> {
        let v = self.require(key)?;
        v.parse()
            .with_context(|| format!("option '{key}': bad number '{v}'"))
    }

    pub fn require_u64(&self, key: &str) -> anyhow::Result<u64> {
        let v = self.require(key)?;
        v.parse()
            .with_context(|| format!("option '{key}': bad integer '{v}'"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> anyhow::Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    /// Sorted `key=value` echo for output headers.
    pub fn echo(&self) -> String {
        self.map
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Output file header with version, effective config, and master seed.
pub fn provenance_header(config: &RunConfig, seed: u64) -> String {
    format!(
        "# gibbsdc v{}\n# config: {}\n# seed: {}\n",
        gibbsdc::VERSION,
        config.echo(),
        seed
    )
}
