//! Content-addressed coefficient cache: one `<hash>.json` file per entry.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kernels::hex_sha256;

pub const FORMAT_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "LACE_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".lace-cache";

pub fn default_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    /// `saw-tables`, `pi-tables` or `op-estimates`.
    pub kind: String,
    pub kernel_hash: String,
    pub model: String,
    pub n_max: usize,
    /// `exact` or `float`.
    pub arithmetic: String,
    /// Further parameters that change the payload, already formatted.
    pub extra: Vec<(String, String)>,
}

impl CacheKey {
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(&(FORMAT_VERSION, self)).expect("key serialises");
        hex_sha256(canon.as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    format_version: u32,
    hash: String,
    key: CacheKey,
    created_unix: u64,
    payload_sha256: String,
    payload: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CacheListing {
    pub hash: String,
    pub kind: String,
    pub bytes: u64,
    pub created_unix: u64,
    pub n_max: usize,
    pub arithmetic: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PurgeSummary {
    pub deleted: Vec<String>,
    pub not_found: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

impl Cache {
    /// Opens `dir`, creating it when absent.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Cache(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    /// Opens an existing directory without creating it.
    pub fn existing(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Cache(format!("cache directory {} does not exist", dir.display())));
        }
        Ok(Cache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// `None` on any mismatch: absent file, other format version, other key or corrupt payload.
    pub fn load<T: DeserializeOwned>(&self, key: &CacheKey) -> Result<Option<T>> {
        let hash = key.hash();
        let text = match fs::read_to_string(self.path(&hash)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let Ok(file) = serde_json::from_str::<CacheFile>(&text) else {
            return Ok(None);
        };
        if file.format_version != FORMAT_VERSION || file.hash != hash || &file.key != key {
            return Ok(None);
        }
        let payload_text = serde_json::to_string(&file.payload)?;
        if hex_sha256(payload_text.as_bytes()) != file.payload_sha256 {
            return Ok(None);
        }
        Ok(serde_json::from_value(file.payload).ok())
    }

    pub fn store<T: Serialize>(&self, key: &CacheKey, value: &T) -> Result<String> {
        let hash = key.hash();
        let payload = serde_json::to_value(value)?;
        let payload_sha256 = hex_sha256(serde_json::to_string(&payload)?.as_bytes());
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let file = CacheFile {
            format_version: FORMAT_VERSION,
            hash: hash.clone(),
            key: key.clone(),
            created_unix,
            payload_sha256,
            payload,
        };
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        fs::write(&tmp, serde_json::to_string(&file)?)?;
        fs::rename(&tmp, self.path(&hash))?;
        Ok(hash)
    }

    pub fn list(&self) -> Result<Vec<CacheListing>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().to_string();
            let Some(hash) = name.strip_suffix(".json") else { continue };
            if !is_hash(hash) {
                continue;
            }
            let bytes = entry.metadata()?.len();
            let text = fs::read_to_string(entry.path())?;
            let listing = match serde_json::from_str::<CacheFile>(&text) {
                Ok(f) => CacheListing {
                    hash: hash.to_string(),
                    kind: f.key.kind,
                    bytes,
                    created_unix: f.created_unix,
                    n_max: f.key.n_max,
                    arithmetic: f.key.arithmetic,
                },
                Err(_) => CacheListing {
                    hash: hash.to_string(),
                    kind: "corrupt".into(),
                    bytes,
                    created_unix: 0,
                    n_max: 0,
                    arithmetic: String::new(),
                },
            };
            out.push(listing);
        }
        out.sort_by(|a, b| a.hash.cmp(&b.hash));
        Ok(out)
    }

    /// Removes the given entries; unknown hashes are reported, not errors.
    pub fn purge(&self, hashes: &[String]) -> Result<PurgeSummary> {
        let mut s = PurgeSummary::default();
        for h in hashes {
            let p = self.path(h);
            if is_hash(h) && p.is_file() {
                fs::remove_file(&p)?;
                s.deleted.push(h.clone());
            } else {
                s.not_found.push(h.clone());
            }
        }
        Ok(s)
    }

    pub fn purge_all(&self) -> Result<PurgeSummary> {
        let hashes: Vec<String> = self.list()?.into_iter().map(|l| l.hash).collect();
        self.purge(&hashes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: usize) -> CacheKey {
        CacheKey {
            kind: "saw-tables".into(),
            kernel_hash: "abc".into(),
            model: "saw".into(),
            n_max: n,
            arithmetic: "exact".into(),
            extra: vec![],
        }
    }

    #[test]
    fn store_load_list_purge() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::open(dir.path()).unwrap();
        assert!(c.list().unwrap().is_empty());
        let h = c.store(&key(3), &vec![0.1f64, 1.0 / 3.0]).unwrap();
        let v: Vec<f64> = c.load(&key(3)).unwrap().unwrap();
        assert_eq!(v, vec![0.1, 1.0 / 3.0]);
        assert!(c.load::<Vec<f64>>(&key(4)).unwrap().is_none());
        assert_eq!(c.list().unwrap().len(), 1);
        assert_eq!(c.purge(&[h.clone()]).unwrap().deleted.len(), 1);
        let again = c.purge(&[h]).unwrap();
        assert!(again.deleted.is_empty());
        assert_eq!(again.not_found.len(), 1);
    }

    #[test]
    fn tampered_payload_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::open(dir.path()).unwrap();
        let h = c.store(&key(2), &vec![1.0f64]).unwrap();
        let p = dir.path().join(format!("{h}.json"));
        let text = fs::read_to_string(&p).unwrap().replace("[1.0]", "[2.0]");
        fs::write(&p, text).unwrap();
        assert!(c.load::<Vec<f64>>(&key(2)).unwrap().is_none());
    }
}
