use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simal_core::active::RunLock;
use simal_core::sim::{sha256_hex, write_atomic};
use simal_core::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const OUTPUTS_FILE: &str = "outputs.json";

/// Resolved configuration as written into a run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct Resolved<T> {
    pub command: String,
    pub config_hash: String,
    pub settings: T,
}

pub fn config_hash<T: Serialize>(command: &str, settings: &T) -> Result<String> {
    let mut bytes = command.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend(serde_json::to_vec(settings)?);
    Ok(sha256_hex(&bytes))
}

/// What a run directory holds relative to the requested configuration.
#[derive(Debug, PartialEq, Eq)]
pub enum DirState {
    Fresh,
    /// Same configuration, every recorded output present and intact.
    Complete,
    /// Same configuration, not finished.
    Partial,
}

/// An output directory, locked for the lifetime of the value.
pub struct RunDir {
    pub path: PathBuf,
    pub state: DirState,
    _lock: RunLock,
}

fn read_hash(path: &Path) -> Result<Option<String>> {
    let p = path.join(CONFIG_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
    Ok(table.get("config_hash").and_then(|v| v.as_str()).map(str::to_string))
}

fn outputs_intact(path: &Path) -> Result<bool> {
    let p = path.join(OUTPUTS_FILE);
    if !p.exists() {
        return Ok(false);
    }
    let sums: BTreeMap<String, String> = serde_json::from_slice(&fs::read(&p)?)?;
    for (name, sum) in sums {
        match fs::read(path.join(&name)) {
            Ok(bytes) if sha256_hex(&bytes) == sum => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

impl RunDir {
    /// Opens `path` for a run with `hash`. A directory written under another
    /// configuration is refused unless `force`, which clears it first.
    /// With `require_existing`, a directory without a matching run is an
    /// error instead of a fresh start.
    pub fn open<T: Serialize>(
        path: &Path,
        command: &str,
        settings: &T,
        force: bool,
        require_existing: bool,
    ) -> Result<Self> {
        let hash = config_hash(command, settings)?;
        fs::create_dir_all(path)?;
        let lock = RunLock::acquire(path)?;
        let existing = read_hash(path)?;
        let foreign = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .any(|e| e.file_name() != RunLock::FILE);
        let state = match existing {
            Some(h) if h == hash && !force => {
                if outputs_intact(path)? {
                    DirState::Complete
                } else {
                    DirState::Partial
                }
            }
            Some(h) if !force => {
                return Err(Error::validation(format!(
                    "{} holds a run with config {h}; this run has config {hash} (use --force to replace it)",
                    path.display()
                )))
            }
            None if foreign && !force => {
                return Err(Error::validation(format!(
                    "{} is not empty and is not a run directory (use --force to overwrite)",
                    path.display()
                )))
            }
            _ => {
                if force {
                    for entry in fs::read_dir(path)? {
                        let entry = entry?;
                        if entry.file_name() == RunLock::FILE {
                            continue;
                        }
                        if entry.file_type()?.is_dir() {
                            fs::remove_dir_all(entry.path())?;
                        } else {
                            fs::remove_file(entry.path())?;
                        }
                    }
                }
                DirState::Fresh
            }
        };
        if state == DirState::Fresh && require_existing {
            return Err(Error::validation(format!("{} holds no run to resume", path.display())));
        }
        if state == DirState::Fresh {
            let resolved = Resolved {
                command: command.to_string(),
                config_hash: hash,
                settings,
            };
            let text = toml::to_string(&resolved).map_err(|e| Error::Format(e.to_string()))?;
            write_atomic(&path.join(CONFIG_FILE), text.as_bytes())?;
        }
        Ok(RunDir {
            path: path.to_path_buf(),
            state,
            _lock: lock,
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Records checksums of the finished outputs, marking the run complete.
    pub fn finish(&self, outputs: &[&str]) -> Result<()> {
        let mut sums = BTreeMap::new();
        for name in outputs {
            sums.insert(name.to_string(), sha256_hex(&fs::read(self.path.join(name))?));
        }
        let mut bytes = serde_json::to_vec_pretty(&sums)?;
        bytes.push(b'\n');
        write_atomic(&self.path.join(OUTPUTS_FILE), &bytes)
    }
}
