//! Recorded backend exchanges for offline, deterministic runs. A cassette
//! directory holds one `<backend>.json` file mapping request digests to the
//! request and its response.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{request_digest, BackendError, Envelope, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CassetteMode {
    /// Forward to the live transport and store every exchange.
    Record,
    /// Answer only from the tape; a miss is an error.
    Replay,
    /// Forward without storing.
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeEntry {
    pub version: String,
    pub request: Value,
    pub response: Value,
}

type Tape = BTreeMap<String, TapeEntry>;

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cassette {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0:?} mode needs a live transport")]
    NoTransport(CassetteMode),
}

pub struct Cassette {
    dir: PathBuf,
    mode: CassetteMode,
    inner: Option<Arc<dyn Transport>>,
    tapes: Mutex<BTreeMap<String, Tape>>,
}

impl std::fmt::Debug for Cassette {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cassette").field("dir", &self.dir).field("mode", &self.mode).finish()
    }
}

impl Cassette {
    pub fn open(dir: impl Into<PathBuf>, mode: CassetteMode, inner: Option<Arc<dyn Transport>>) -> Result<Self, CassetteError> {
        let dir = dir.into();
        if mode != CassetteMode::Replay && inner.is_none() {
            return Err(CassetteError::NoTransport(mode));
        }
        let mut tapes = BTreeMap::new();
        if dir.is_dir() {
            let entries = std::fs::read_dir(&dir).map_err(|e| CassetteError::Io { path: dir.clone(), source: e })?;
            for entry in entries {
                let path = entry.map_err(|e| CassetteError::Io { path: dir.clone(), source: e })?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let Some(backend) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
                let text = std::fs::read_to_string(&path).map_err(|e| CassetteError::Io { path: path.clone(), source: e })?;
                let tape: Tape = serde_json::from_str(&text).map_err(|e| CassetteError::Json { path: path.clone(), source: e })?;
                tapes.insert(backend, tape);
            }
        }
        Ok(Cassette { dir, mode, inner, tapes: Mutex::new(tapes) })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of stored exchanges per backend.
    pub fn sizes(&self) -> BTreeMap<String, usize> {
        self.lock().iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Tape>> {
        self.tapes.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn save(&self, backend: &str, tape: &Tape) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{backend}.json"));
        let tmp = self.dir.join(format!(".{backend}.json.tmp"));
        let mut text = serde_json::to_string_pretty(tape).expect("tape serializes");
        text.push('\n');
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, path)
    }
}

impl Transport for Cassette {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
        let digest = request_digest(request);
        match self.mode {
            CassetteMode::Replay => self
                .lock()
                .get(&request.backend)
                .and_then(|t| t.get(&digest))
                .map(|e| e.response.clone())
                .ok_or(BackendError::CassetteMiss { backend: request.backend.clone(), digest }),
            CassetteMode::Passthrough => self.inner.as_ref().expect("checked at open").call(request),
            CassetteMode::Record => {
                let response = self.inner.as_ref().expect("checked at open").call(request)?;
                let mut tapes = self.lock();
                let tape = tapes.entry(request.backend.clone()).or_default();
                tape.insert(
                    digest,
                    TapeEntry { version: request.version.clone(), request: request.payload.clone(), response: response.clone() },
                );
                if let Err(e) = self.save(&request.backend, tape) {
                    log::warn!("could not write cassette for {}: {e}", request.backend);
                }
                Ok(response)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Transport for Echo {
        fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
            Ok(serde_json::json!({ "echo": request.payload }))
        }
    }

    fn env(payload: Value) -> Envelope {
        Envelope { backend: "ocsr".into(), version: "v1".into(), payload }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Cassette::open(dir.path(), CassetteMode::Record, Some(Arc::new(Echo))).unwrap();
        let answer = rec.call(&env(serde_json::json!({"b": 1, "a": 2}))).unwrap();
        assert_eq!(rec.sizes()["ocsr"], 1);

        let play = Cassette::open(dir.path(), CassetteMode::Replay, None).unwrap();
        assert_eq!(play.call(&env(serde_json::json!({"a": 2, "b": 1}))).unwrap(), answer);
        let miss = play.call(&env(serde_json::json!({"a": 3})));
        assert!(matches!(miss, Err(BackendError::CassetteMiss { .. })));
    }

    #[test]
    fn live_modes_need_a_transport() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Cassette::open(dir.path(), CassetteMode::Record, None), Err(CassetteError::NoTransport(_))));
        let pass = Cassette::open(dir.path(), CassetteMode::Passthrough, Some(Arc::new(Echo))).unwrap();
        pass.call(&env(Value::Null)).unwrap();
        assert!(pass.sizes().is_empty());
        assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    }
}
