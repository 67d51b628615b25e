//! `--config` files: flags override file values, which override defaults.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    table: toml::Table,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Ok(Settings { table })
    }

    #[cfg(test)]
    pub fn from_table(table: toml::Table) -> Self {
        Settings { table }
    }

    /// `flag`, else the file's `key`, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config key {key:?}: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        Settings::from_table(text.parse().unwrap())
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let s = settings("lobes = 8\nlambda = 0.5");
        assert_eq!(s.pick(Some(4usize), "lobes", 32).unwrap(), 4);
        assert_eq!(s.pick(None, "lobes", 32usize).unwrap(), 8);
        assert_eq!(s.pick(None, "batch", 4096usize).unwrap(), 4096);
        assert_eq!(s.pick(None, "lambda", 0.1f64).unwrap(), 0.5);
    }

    #[test]
    fn wrong_type_is_a_usage_error() {
        let s = settings("lobes = \"many\"");
        assert_eq!(s.pick(None, "lobes", 32usize).unwrap_err().code, 1);
    }
}
