//! `key = value` configuration files.
//!
//! Keys are namespaced by module (`gt.*`, `post.*`, `train.*`, `synth.*`)
//! and map onto command-line flags: `gt.sigma` becomes `--gt-sigma`, the
//! other namespaces drop their prefix (`train.batch_size` becomes
//! `--batch-size`). Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;

use crate::{IoError, IoResult};

pub const NAMESPACES: [&str; 4] = ["gt", "post", "train", "synth"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> IoResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| IoError::format(path, format!("line {}: {m}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            let (ns, name) = k.split_once('.').ok_or_else(|| err("key needs a namespace, e.g. train.lr"))?;
            if !NAMESPACES.contains(&ns) {
                return Err(err(&format!("unknown namespace {ns:?}")));
            }
            if name.is_empty() || v.is_empty() {
                return Err(err("empty key or value"));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(&format!("duplicate key {k}")));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// Long flag name (without dashes) for a config key.
pub fn flag_for(key: &str) -> Option<String> {
    let (ns, name) = key.split_once('.')?;
    let name = name.replace('_', "-");
    Some(if ns == "gt" { format!("gt-{name}") } else { name })
}
