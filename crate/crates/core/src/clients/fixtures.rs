use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ClientError, Service};

/// One recorded exchange, stored at `{root}/{service}/{digest}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub service: Service,
    pub digest: String,
    /// The digest body (request with inline payloads removed).
    pub request: Value,
    pub response: Value,
}

/// Transcript directory. Reads are lock-free; writes are serialized.
#[derive(Debug)]
pub struct FixtureStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, service: Service, digest: &str) -> PathBuf {
        self.root.join(service.as_str()).join(format!("{digest}.json"))
    }

    pub fn read(&self, service: Service, digest: &str) -> Result<Option<Transcript>, ClientError> {
        let p = self.path(service, digest);
        let bytes = match fs::read(&p) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ClientError::Fixture(format!("{}: {e}", p.display()))),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| ClientError::Fixture(format!("{}: {e}", p.display())))
    }

    pub fn write(&self, t: &Transcript) -> Result<(), ClientError> {
        let _g = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let p = self.path(t.service, &t.digest);
        let io = |e: std::io::Error| ClientError::Fixture(format!("{}: {e}", p.display()));
        fs::create_dir_all(p.parent().expect("fixture paths have a parent")).map_err(io)?;
        let mut body = serde_json::to_vec_pretty(t).expect("transcripts serialize");
        body.push(b'\n');
        let tmp = p.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&body).map_err(io)?;
        drop(f);
        fs::rename(&tmp, &p).map_err(io)
    }
}
