//! Plain `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment line. Unknown keys are
//! an error so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), (idx + 1, value)).is_some() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    /// Removes and parses `key`, leaving `target` untouched when absent.
    pub fn take<T>(&mut self, key: &str, target: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some((line, value)) = self.entries.remove(key) {
            *target = value.parse().map_err(|e: T::Err| Error::Parse {
                line,
                msg: format!("bad value for `{key}`: {e}"),
            })?;
        }
        Ok(())
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            }),
            None => Ok(()),
        }
    }
}
