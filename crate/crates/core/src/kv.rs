//! Plain-text `key=value` config files: one pair per line, `#` starts a
//! comment, blank lines ignored, keys unique.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, file: &str) -> Result<Vec<Entry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(config_err(file, line, format!("expected key=value, got `{body}`")));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(config_err(file, line, "empty key".into()));
        }
        if !seen.insert(key.clone()) {
            return Err(config_err(file, line, format!("duplicate key `{key}`")));
        }
        out.push(Entry {
            line,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<(Vec<Entry>, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    Ok((parse(&text, &file)?, file))
}

pub fn config_err(file: &str, line: usize, msg: String) -> Error {
    Error::Config {
        file: file.to_string(),
        line,
        msg,
    }
}

impl Entry {
    pub fn parse<T: FromStr>(&self, file: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| config_err(file, self.line, format!("bad value for `{}`: {e}", self.key)))
    }

    pub fn list<T: FromStr>(&self, file: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.value
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|e| config_err(file, self.line, format!("bad list item `{}` for `{}`: {e}", p.trim(), self.key)))
            })
            .collect()
    }

    pub fn unknown(&self, file: &str) -> Error {
        config_err(file, self.line, format!("unknown key `{}`", self.key))
    }
}
