//! World definitions as TOML files, and the search path used to find them.
//!
//! A file named `<world>.toml` in any search directory replaces the builtin
//! world of that name. Directories given on the command line come first, then
//! the entries of `LAWFORGE_WORLD_PATH` (split like `PATH`).

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::forcelaws::catalog::{catalog, lookup, CatalogError};
use crate::types::{validate_world, WorldDefinition};

pub const WORLD_PATH_ENV: &str = "LAWFORGE_WORLD_PATH";

#[derive(Debug, Error)]
pub enum WorldFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a world definition: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid world: {}", problems.join("; "))]
    Invalid { path: PathBuf, problems: Vec<String> },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

pub fn to_toml(world: &WorldDefinition) -> String {
    toml::to_string(world).expect("world definitions serialize to TOML")
}

/// Parses and validates a world definition. `path` is used for messages only.
pub fn from_toml(text: &str, path: &Path) -> Result<WorldDefinition, WorldFileError> {
    let world: WorldDefinition = toml::from_str(text).map_err(|e| WorldFileError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let problems = validate_world(&world);
    if problems.is_empty() {
        Ok(world)
    } else {
        Err(WorldFileError::Invalid {
            path: path.to_path_buf(),
            problems,
        })
    }
}

pub fn load(path: &Path) -> Result<WorldDefinition, WorldFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorldFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_toml(&text, path)
}

pub fn save(world: &WorldDefinition, path: &Path) -> Result<(), WorldFileError> {
    std::fs::write(path, to_toml(world)).map_err(|source| WorldFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `extra` followed by the directories listed in `LAWFORGE_WORLD_PATH`.
pub fn search_dirs(extra: &[PathBuf]) -> Vec<PathBuf> {
    let mut dirs = extra.to_vec();
    if let Some(value) = std::env::var_os(WORLD_PATH_ENV) {
        dirs.extend(std::env::split_paths(&value).filter(|p| !p.as_os_str().is_empty()));
    }
    dirs
}

/// Finds `name` on the search path, falling back to the builtin catalog.
pub fn resolve(name: &str, dirs: &[PathBuf]) -> Result<WorldDefinition, WorldFileError> {
    for dir in dirs {
        let candidate = dir.join(format!("{name}.toml"));
        if candidate.is_file() {
            return load(&candidate);
        }
    }
    Ok(lookup(name)?)
}

/// Writes every builtin world to `dir/<name>.toml`.
pub fn export_catalog(dir: &Path) -> Result<Vec<PathBuf>, WorldFileError> {
    std::fs::create_dir_all(dir).map_err(|source| WorldFileError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    catalog()
        .iter()
        .map(|world| {
            let path = dir.join(format!("{}.toml", world.name));
            save(world, &path).map(|_| path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let mut world = lookup("gravity").unwrap();
        world.step_size = 5e-4;
        save(&world, &dir.path().join("gravity.toml")).unwrap();
        let found = resolve("gravity", &[dir.path().to_path_buf()]).unwrap();
        assert_eq!(found.step_size, 5e-4);
        let builtin = resolve("yukawa", &[dir.path().to_path_buf()]).unwrap();
        assert_eq!(builtin, lookup("yukawa").unwrap());
    }

    #[test]
    fn invalid_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut world = lookup("gravity").unwrap();
        world.step_size = -1.0;
        let path = dir.path().join("gravity.toml");
        save(&world, &path).unwrap();
        assert!(matches!(load(&path), Err(WorldFileError::Invalid { .. })));
    }
}
