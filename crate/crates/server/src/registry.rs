//! Model registry: a directory of `<version>.muqar` files.

use std::fs;
use std::path::{Path, PathBuf};

use muqar_core::forecast::{ForecastError, ForecastModel};

pub const EXTENSION: &str = "muqar";

#[derive(Debug, Clone)]
pub struct Registry {
    dir: PathBuf,
}

fn valid_version(v: &str) -> bool {
    !v.is_empty()
        && v.len() <= 128
        && !v.starts_with('.')
        && v.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl Registry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path of an existing version; `None` for unknown or malformed names.
    pub fn path(&self, version: &str) -> Option<PathBuf> {
        if !valid_version(version) {
            return None;
        }
        let p = self.dir.join(format!("{version}.{EXTENSION}"));
        p.is_file().then_some(p)
    }

    /// Sorted version names.
    pub fn versions(&self) -> std::io::Result<Vec<String>> {
        let mut out = Vec::new();
        if !self.dir.exists() {
            return Ok(out);
        }
        for entry in fs::read_dir(&self.dir)? {
            let p = entry?.path();
            if p.extension().and_then(|e| e.to_str()) == Some(EXTENSION) {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    if valid_version(stem) {
                        out.push(stem.to_string());
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Store `model` under `version` (its embedded version is set to match).
    pub fn save(&self, model: &mut ForecastModel, version: &str) -> Result<PathBuf, ForecastError> {
        if !valid_version(version) {
            return Err(ForecastError::Input(format!("invalid version name '{version}'")));
        }
        fs::create_dir_all(&self.dir)?;
        model.set_version(version);
        let path = self.dir.join(format!("{version}.{EXTENSION}"));
        let tmp = self.dir.join(format!(".{version}.{EXTENSION}.tmp"));
        fs::write(&tmp, model.to_bytes())?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Load a version, refusing models built against another taxonomy.
    pub fn load(&self, version: &str, taxonomy_hash: &str) -> Result<Option<ForecastModel>, ForecastError> {
        let Some(path) = self.path(version) else {
            return Ok(None);
        };
        let bytes = fs::read(path)?;
        let mut model = ForecastModel::from_bytes(&bytes, Some(taxonomy_hash))?;
        model.set_version(version);
        Ok(Some(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_names_cannot_escape_the_directory() {
        for bad in ["", "../x", "a/b", ".hidden", "a b"] {
            assert!(!valid_version(bad), "{bad}");
        }
        assert!(valid_version("v1.2_rc-3"));
    }
}
