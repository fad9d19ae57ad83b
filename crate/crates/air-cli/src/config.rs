//! Optional flat-key TOML config files for `train`: any long flag name may
//! appear as a key; explicit command-line flags win over file values.

use crate::CliError;
use std::collections::BTreeMap;
use std::path::Path;

/// Flat key → primitive value table read from a TOML file.
pub struct FileConfig {
    values: BTreeMap<String, toml::Value>,
}

impl FileConfig {
    pub fn empty() -> Self {
        Self {
            values: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            if v.is_table() || v.is_array() {
                return Err(CliError::Usage(format!(
                    "config key `{k}` must be a flat primitive value"
                )));
            }
            values.insert(k, v);
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.values.get(key)
    }

    /// Flag value if given, else the file value, else the default.
    pub fn resolve<T: FromToml>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => T::from_toml(raw).ok_or_else(|| {
                CliError::Usage(format!("config key `{key}` has the wrong type: {raw}"))
            }),
            None => Ok(default),
        }
    }

    /// Like [`resolve`] but the value may stay absent.
    pub fn resolve_opt<T: FromToml>(
        &self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            Some(raw) => T::from_toml(raw)
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("config key `{key}` has the wrong type"))),
            None => Ok(None),
        }
    }
}

pub trait FromToml: Sized {
    fn from_toml(v: &toml::Value) -> Option<Self>;
}

impl FromToml for u64 {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
}

impl FromToml for usize {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
}

impl FromToml for f64 {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    }
}

impl FromToml for bool {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        v.as_bool()
    }
}

impl FromToml for String {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        v.as_str().map(str::to_string)
    }
}

/// Render `key = value` lines, sorted by key, for `config.echo`.
pub fn echo_lines(pairs: &[(&str, String)]) -> String {
    let mut sorted: Vec<_> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = String::new();
    for (k, v) in sorted {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
