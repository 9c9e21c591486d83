//! Flat key=value configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Keys match the long flag
//! names (dashes and underscores are interchangeable). Command line flags
//! take precedence over the file; unknown keys are an error so typos do not
//! pass silently.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::Path;

use rpca_synth::{Error, Result};

pub struct ConfigFile {
    values: HashMap<String, (String, usize)>,
    consumed: RefCell<Vec<String>>,
    path: String,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    /// An empty file: every lookup misses, nothing to complain about.
    pub fn empty() -> ConfigFile {
        ConfigFile {
            values: HashMap::new(),
            consumed: RefCell::new(Vec::new()),
            path: String::new(),
        }
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::invalid(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    i + 1
                )));
            };
            let key = normalize(key);
            if values.insert(key.clone(), (value.trim().to_string(), i + 1)).is_some() {
                return Err(Error::invalid(format!(
                    "{}:{}: duplicate key {key:?}",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(ConfigFile {
            values,
            consumed: RefCell::new(Vec::new()),
            path: path.display().to_string(),
        })
    }

    fn raw(&self, key: &str) -> Option<&(String, usize)> {
        let key = normalize(key);
        let hit = self.values.get(&key);
        if hit.is_some() {
            self.consumed.borrow_mut().push(key);
        }
        hit
    }

    /// The value under `key` parsed as `T`, or the flag value when given:
    /// flags always win over the file.
    pub fn merge<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            self.raw(key); // mark consumed so an overridden key is not "unknown"
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some((text, line)) => text.parse::<T>().map(Some).map_err(|e| {
                Error::invalid(format!("{}:{}: bad value for {key}: {e}", self.path, line))
            }),
        }
    }

    /// As [`merge`](Self::merge) for list-valued keys; the file value is
    /// comma-separated.
    pub fn merge_list<T: std::str::FromStr>(
        &self,
        flag: Vec<T>,
        key: &str,
    ) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        if !flag.is_empty() {
            self.raw(key);
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some((text, line)) => text
                .split(',')
                .map(|part| {
                    part.trim().parse::<T>().map_err(|e| {
                        Error::invalid(format!(
                            "{}:{}: bad value for {key}: {e}",
                            self.path, line
                        ))
                    })
                })
                .collect(),
        }
    }

    /// Errors when the file holds keys nothing asked for.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let mut unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !consumed.iter().any(|c| c == *k))
            .map(|k| k.as_str())
            .collect();
        if unknown.is_empty() {
            return Ok(());
        }
        unknown.sort_unstable();
        Err(Error::invalid(format!(
            "{}: unknown configuration keys: {}",
            self.path,
            unknown.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_comments_and_aliases() {
        let f = write_config("# a comment\nseed = 42\nbandwidth_mean = 2.5 # trailing\n");
        let cfg = ConfigFile::load(f.path()).unwrap();
        assert_eq!(cfg.merge::<u64>(None, "seed").unwrap(), Some(42));
        assert_eq!(cfg.merge::<f64>(None, "bandwidth-mean").unwrap(), Some(2.5));
        cfg.reject_unknown().unwrap();
    }

    #[test]
    fn flags_override_file_values() {
        let f = write_config("seed = 42\n");
        let cfg = ConfigFile::load(f.path()).unwrap();
        assert_eq!(cfg.merge::<u64>(Some(7), "seed").unwrap(), Some(7));
        cfg.reject_unknown().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed_keys() {
        let f = write_config("sed = 42\n");
        let cfg = ConfigFile::load(f.path()).unwrap();
        assert!(cfg.merge::<u64>(None, "seed").unwrap().is_none());
        assert!(cfg.reject_unknown().unwrap_err().to_string().contains("sed"));

        let f = write_config("just some text\n");
        assert!(ConfigFile::load(f.path()).is_err());
        let f = write_config("seed = 1\nseed = 2\n");
        assert!(ConfigFile::load(f.path()).is_err());
    }

    #[test]
    fn parses_lists() {
        let f = write_config("sigma2 = 1, 4, 9\n");
        let cfg = ConfigFile::load(f.path()).unwrap();
        assert_eq!(
            cfg.merge_list::<f64>(Vec::new(), "sigma2").unwrap(),
            vec![1.0, 4.0, 9.0]
        );
        assert_eq!(
            cfg.merge_list::<f64>(vec![25.0], "sigma2").unwrap(),
            vec![25.0],
            "flag list wins"
        );
    }
}
