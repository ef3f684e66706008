//! Switch configuration from command-line flags plus an optional TOML file.
//! Keys present in the file override the corresponding flags.

use std::path::Path;

use sdn_fabric::switch::{Config, ConfigError};
use serde::Deserialize;
use toml::{Table, Value};

/// Flag values as config keys; unset flags are left out.
#[derive(Clone, Debug, Default)]
pub struct Overrides(pub Table);

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn set_opt<T: Into<Value>>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }
}

/// Defaults, then `flags`, then the keys of `file`.
pub fn resolve(flags: &Overrides, file: Option<&str>) -> Result<Config, ConfigError> {
    let mut table = flags.0.clone();
    if let Some(text) = file {
        let from_file: Table = toml::from_str(text)?;
        table.extend(from_file);
    }
    let config = Config::deserialize(Value::Table(table))
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load(flags: &Overrides, path: Option<&Path>) -> Result<Config, ConfigError> {
    let text = match path {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?,
        ),
        None => None,
    };
    resolve(flags, text.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sdn_fabric::pipeline::MissPolicy;

    #[test]
    fn file_overrides_flags() {
        let mut f = Overrides::default();
        f.set("ports", 4i64)
            .set("workers", 2i64)
            .set("miss_policy", "drop");
        let c = resolve(&f, Some("ports = 16\ncontroller = \"10.0.0.1\"\n")).unwrap();
        assert_eq!(c.ports, 16);
        assert_eq!(c.workers, 2);
        assert_eq!(c.miss_policy, MissPolicy::Drop);
        assert_eq!(c.controller_addr().as_deref(), Some("10.0.0.1:6633"));
        assert_eq!(c.tables, Config::default().tables);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(resolve(&Overrides::default(), Some("bogus = 1")).is_err());
        assert!(resolve(&Overrides::default(), Some("ports = \"x\"")).is_err());
        assert!(resolve(&Overrides::default(), Some("ports = 0")).is_err());
        assert!(resolve(&Overrides::default(), Some("ports = ")).is_err());
        assert_eq!(
            resolve(&Overrides::default(), None).unwrap(),
            Config::default()
        );
    }
}
