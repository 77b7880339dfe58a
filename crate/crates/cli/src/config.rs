//! `key=value` settings files and flag/file/default resolution.
//!
//! Every value has three sources in priority order: the command-line flag,
//! the `--config` file, and the built-in default. Keys in the file use the
//! long flag names without the leading dashes (`particles=1000`). Blank
//! lines and `#` comments are ignored.

use mppf::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected key=value, got {raw:?}"),
                });
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("config key {key}={raw}: {e}"))),
        }
    }

    /// Flag wins, then the config file, then the default.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Flag wins, then the config file; absent is fine.
    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.parsed(key)
    }

    /// Flag wins, then the config file; absent is a configuration error.
    pub fn pick_required<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick_opt(flag, key)?
            .ok_or_else(|| Error::Config(format!("missing required setting --{key}")))
    }
}

/// Comma-separated numeric lists, e.g. `--eps 0.25,0.125` or `--levels 2,3,4`.
pub fn parse_list<T>(raw: &str, key: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Result<Vec<T>> = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::Config(format!("{key} entry {s:?}: {e}")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} list is empty")));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\nparticles = 250\nlevel=3\n").unwrap();
        drop(f);

        let s = Settings::load(Some(&path)).unwrap();
        assert_eq!(s.pick(Some(100usize), "particles", 1).unwrap(), 100);
        assert_eq!(s.pick(None::<usize>, "particles", 1).unwrap(), 250);
        assert_eq!(s.pick(None::<u32>, "level", 9).unwrap(), 3);
        assert_eq!(s.pick(None::<u32>, "l0", 9).unwrap(), 9);
        assert!(s.pick_required(None::<u64>, "seed").is_err());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "particles 250\n").unwrap();
        assert!(Settings::load(Some(&path)).is_err());

        let path2 = dir.path().join("bad2.cfg");
        std::fs::write(&path2, "particles=abc\n").unwrap();
        let s = Settings::load(Some(&path2)).unwrap();
        assert!(s.pick(None::<usize>, "particles", 1).is_err());
    }

    #[test]
    fn lists_parse_and_reject_garbage() {
        let eps: Vec<f64> = parse_list("0.25, 0.125", "eps").unwrap();
        assert_eq!(eps, vec![0.25, 0.125]);
        assert!(parse_list::<f64>("0.25,x", "eps").is_err());
    }
}
