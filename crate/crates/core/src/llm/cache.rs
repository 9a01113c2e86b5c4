use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::RawResponse;

/// On-disk response cache: one JSON file per key, named by the hex key.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

/// Outcome of a cache read.
#[derive(Debug)]
pub enum Lookup {
    Hit(RawResponse),
    Miss,
    /// The entry exists but could not be decoded.
    Corrupt(String),
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn get(&self, key: &str) -> Lookup {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => return Lookup::Miss,
        };
        match serde_json::from_slice::<RawResponse>(&bytes) {
            Ok(r) if r.token_logprobs.iter().all(|l| l.is_finite()) => Lookup::Hit(r),
            Ok(_) => Lookup::Corrupt(format!("{}: non-finite logprob", path.display())),
            Err(e) => Lookup::Corrupt(format!("{}: {e}", path.display())),
        }
    }

    /// Writes atomically so concurrent readers never observe partial entries.
    pub fn put(&self, key: &str, response: &RawResponse) -> Result<()> {
        let path = self.path_for(key);
        let bytes = serde_json::to_vec(response)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        tmp.write_all(&bytes).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }
}
