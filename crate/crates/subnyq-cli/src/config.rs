//! Flat structured-text config files.
//!
//! One `key = value` pair per line, `#` starts a comment line, and dotted
//! key prefixes group related settings (`sweep.trials = 200`). Duplicate and
//! unknown keys are errors, so typos surface instead of silently falling
//! back to defaults. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", number + 1))?;
            let key = key.trim();
            let value = value.trim();
            let well_formed = !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
            if !well_formed {
                return Err(format!("line {}: malformed key `{key}`", number + 1));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", number + 1));
            }
        }
        Ok(Self { values })
    }

    /// Errors on any key outside the known set, listing the offenders.
    pub fn reject_unknown_keys(&self, known: &[&str]) -> Result<(), String> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(format!("unknown config keys: {}", unknown.join(", ")))
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, String> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("key `{key}`: `{raw}` is not {what}")),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, String> {
        self.parsed(key, "a number")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, String> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, String> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, String> {
        self.parsed(key, "true or false")
    }

    fn parsed_list<T: std::str::FromStr>(
        &self,
        key: &str,
        what: &str,
    ) -> Result<Option<Vec<T>>, String> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|item| item.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| format!("key `{key}`: `{raw}` is not a comma-separated {what}")),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, String> {
        self.parsed_list(key, "number list")
    }

    pub fn get_u32_list(&self, key: &str) -> Result<Option<Vec<u32>>, String> {
        self.parsed_list(key, "integer list")
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, String> {
        self.parsed_list(key, "integer list")
    }
}
