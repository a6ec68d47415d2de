//! `key = value` run configuration. Command-line flags win over the file,
//! the file wins over built-in defaults, and every resolved value is echoed
//! next to the outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: Vec<(String, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Resolver {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!(
                        "config {}: line {}: expected `key = value`",
                        path.display(),
                        k + 1
                    );
                };
                file.insert(normalize(key), value.trim().to_string());
            }
        }
        Ok(Self {
            file,
            ..Self::default()
        })
    }

    fn lookup<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: cannot parse `{raw}`: {e}")),
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let value = self.lookup(key, flag)?.unwrap_or(default);
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        match self.lookup(key, flag)? {
            Some(v) => {
                self.echo.push((key.to_string(), v.to_string()));
                Ok(v)
            }
            None => bail!("missing required setting `{key}` (flag --{key} or config file)"),
        }
    }

    /// An unset optional value is echoed as `auto`.
    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let value = self.lookup(key, flag)?;
        let shown = value
            .as_ref()
            .map_or_else(|| "auto".to_string(), |v| v.to_string());
        self.echo.push((key.to_string(), shown));
        Ok(value)
    }

    pub fn flag(&mut self, key: &str, set: bool) -> Result<bool> {
        let value = set || self.lookup::<bool>(key, None)?.unwrap_or(false);
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Fails on config-file keys the command never asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config keys for this command: {unknown:?}");
        }
        Ok(())
    }

    pub fn echo_text(&self, command: &str) -> String {
        let mut out = format!("command = {command}\n");
        for (k, v) in &self.echo {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Comma-separated list, e.g. `1,2,3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse::<T>()
                    .map_err(|e| format!("`{}`: {e}", p.trim()))
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\nalpha = 0.5\nfve_threshold = 0.9\n").unwrap();
        let mut r = Resolver::from_file(Some(&path)).unwrap();
        assert_eq!(r.get("alpha", Some(0.1), 0.2).unwrap(), 0.1);
        assert_eq!(r.get("fve-threshold", None, 0.99).unwrap(), 0.9);
        assert_eq!(r.get("h0", None::<usize>, 3).unwrap(), 3);
        assert_eq!(r.optional::<usize>("q", None).unwrap(), None);
        r.finish().unwrap();
        let text = r.echo_text("fit");
        assert!(text.contains("alpha = 0.1\n") && text.contains("q = auto\n"));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "alpah = 0.5\n").unwrap();
        let r = Resolver::from_file(Some(&path)).unwrap();
        assert!(r.finish().is_err());

        fs::write(&path, "alpha = lots\n").unwrap();
        let mut r = Resolver::from_file(Some(&path)).unwrap();
        assert!(r.get("alpha", None, 0.2).is_err());
    }

    #[test]
    fn lists() {
        let l: List<usize> = "1, 2,3".parse().unwrap();
        assert_eq!(l.0, vec![1, 2, 3]);
        assert_eq!(l.to_string(), "1,2,3");
        assert!("1,x".parse::<List<usize>>().is_err());
    }
}
