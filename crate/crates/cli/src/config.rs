//! TOML configuration files.
//!
//! A config file is a table whose keys are long flag names (`_` or `-`);
//! nested tables prefix their keys, so `[quad] rel_tol = 1e-9` becomes
//! `--quad-rel-tol 1e-9`. The resulting flags are appended after the
//! command line and, since later occurrences win, override it.

use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

/// Finds `--config PATH` or `--config=PATH` in raw arguments.
pub fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<Option<String>> {
    Ok(Some(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f:e}"),
        Value::Boolean(_) => return Ok(None),
        Value::Array(items) => {
            let parts: Result<Vec<String>> = items
                .iter()
                .map(|x| scalar(key, x)?.with_context(|| format!("config key '{key}': arrays must hold scalars")))
                .collect();
            parts?.join(",")
        }
        Value::Datetime(d) => d.to_string(),
        Value::Table(_) => bail!("config key '{key}': nested tables go one level deep"),
    }))
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<String>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.replace('_', "-")
        } else {
            format!("{prefix}-{}", k.replace('_', "-"))
        };
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        match v {
            Value::Table(t) if prefix.is_empty() => flatten(&key, t, out)?,
            Value::Boolean(true) => out.push(format!("--{key}")),
            Value::Boolean(false) => {}
            _ => {
                let s = scalar(&key, v)?.expect("non-boolean scalar");
                out.push(format!("--{key}"));
                out.push(s);
            }
        }
    }
    Ok(())
}

/// Flags equivalent to the config file.
pub fn config_flags(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    let mut out = Vec::new();
    flatten("", &table, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattens_tables_and_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "xi = [0.5, 1.0]\ncalibrate = true\nverbose = false\nfit_lo = 30\n[quad]\nrel_tol = 1e-9\n",
        )
        .unwrap();
        let flags = config_flags(&p).unwrap();
        assert_eq!(
            flags,
            vec!["--calibrate", "--fit-lo", "30", "--quad-rel-tol", "1e-9", "--xi", "5e-1,1e0"]
        );
    }

    #[test]
    fn finds_config_argument() {
        let a = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(config_path(&a(&["x", "--config", "c.toml"])), Some("c.toml".into()));
        assert_eq!(config_path(&a(&["x", "--config=c.toml"])), Some("c.toml".into()));
        assert_eq!(config_path(&a(&["x", "paircorr"])), None);
    }
}
