//! Flat `key = value` configuration files with `[section]` headers.
//!
//! ```text
//! # shared by every subcommand
//! [global]
//! seed = 3
//!
//! [evaluate]
//! runs = 5
//! variants = none,raw,sin,encoder
//! ```
//!
//! Keys are long flag names. A value given on the command line wins over
//! the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    /// Section name to ordered `(key, value, line)` entries.
    pub sections: BTreeMap<String, Vec<(String, String, usize)>>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Vec<(String, String, usize)>> = BTreeMap::new();
        let mut current = "global".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    bail!("{origin}:{lineno}: unterminated section header");
                };
                let name = name.trim();
                if name.is_empty() {
                    bail!("{origin}:{lineno}: empty section name");
                }
                current = name.to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{origin}:{lineno}: expected `key = value`");
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                bail!("{origin}:{lineno}: empty key");
            }
            let entries = sections.entry(current.clone()).or_default();
            if entries.iter().any(|(existing, _, _)| *existing == key) {
                bail!("{origin}:{lineno}: duplicate key '{key}' in [{current}]");
            }
            entries.push((key, v.trim().to_string(), lineno));
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }
}
