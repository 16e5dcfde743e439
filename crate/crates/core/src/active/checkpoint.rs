use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::RunState;
use crate::error::{Error, Result};
use crate::sim::{sha256_hex, write_atomic};

pub const CHECKPOINT_FORMAT: &str = "simal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    sha256: String,
}

/// One header line with the payload's sha256, then the JSON payload.
pub fn write_checkpoint(path: &Path, state: &RunState) -> Result<()> {
    let payload = serde_json::to_vec(state)?;
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        sha256: sha256_hex(&payload),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    write_atomic(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<RunState> {
    let bytes = fs::read(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("{}: missing checkpoint header", path.display())))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Format(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {CHECKPOINT_FORMAT} version {CHECKPOINT_VERSION}, found {} version {}",
            path.display(),
            header.format,
            header.version
        )));
    }
    let payload = &bytes[split + 1..];
    let actual = sha256_hex(payload);
    if actual != header.sha256 {
        return Err(Error::Integrity(format!(
            "{}: checkpoint hash {actual} does not match header {}",
            path.display(),
            header.sha256
        )));
    }
    serde_json::from_slice(payload).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub const FILE: &'static str = ".simal.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::validation(format!(
                "{} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = std::env::temp_dir().join(format!("simal-lock-{}", std::process::id()));
        let a = RunLock::acquire(&dir).unwrap();
        assert!(RunLock::acquire(&dir).is_err());
        drop(a);
        let _b = RunLock::acquire(&dir).unwrap();
    }
}
