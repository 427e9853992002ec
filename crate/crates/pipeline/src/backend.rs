//! Backend protocol: every model-backed stage sends a JSON envelope
//! `{backend, version, payload}` through a [`Transport`] and receives a JSON
//! payload back.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PARSER: &str = "parser";
pub const DETECTOR: &str = "detector";
pub const OCSR: &str = "ocsr";
pub const REASONER: &str = "reasoner";
pub const NAME_TO_STRUCTURE: &str = "name_to_structure";
pub const PROTEIN_DB: &str = "protein_db";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub backend: String,
    pub version: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{backend}: timed out")]
    Timeout { backend: String },
    #[error("{backend}: transport error: {message}")]
    Transport { backend: String, message: String },
    #[error("{backend}: HTTP status {code}")]
    Status { backend: String, code: u16 },
    #[error("{backend}: no recorded response for request {digest}")]
    CassetteMiss { backend: String, digest: String },
    #[error("{backend}: malformed response: {message}")]
    Malformed { backend: String, message: String },
    #[error("backend {0} is not configured")]
    NotConfigured(String),
}

impl BackendError {
    /// Transient failures worth another attempt.
    pub fn is_retriable(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::Transport { .. } => true,
            BackendError::Status { code, .. } => *code >= 500 || *code == 429,
            _ => false,
        }
    }
}

/// Carries envelopes to a backend. Implementations must tolerate
/// concurrent calls.
pub trait Transport: Send + Sync {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError>;
}

/// JSON with object keys sorted at every level and no insignificant
/// whitespace.
pub fn canonical_json(v: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String((*k).clone()).to_string());
                    out.push(':');
                    write(&map[k.as_str()], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(v, &mut out);
    out
}

/// Stable request identity: sha256 over backend, version and canonical payload.
pub fn request_digest(request: &Envelope) -> String {
    let mut h = Sha256::new();
    h.update(request.backend.as_bytes());
    h.update([0u8]);
    h.update(request.version.as_bytes());
    h.update([0u8]);
    h.update(canonical_json(&request.payload).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 200 }
    }
}

impl RetryPolicy {
    /// Delay before retry `n` (1-based): base, 2·base, 4·base, ...
    pub fn delay(&self, n: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << (n - 1).min(20)))
    }
}

/// The transport plus the version each backend is addressed with.
#[derive(Clone)]
pub struct Backends {
    transport: Arc<dyn Transport>,
    versions: BTreeMap<String, String>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("versions", &self.versions).field("retry", &self.retry).finish()
    }
}

impl Backends {
    pub fn new(transport: Arc<dyn Transport>, versions: BTreeMap<String, String>, retry: RetryPolicy) -> Self {
        Backends { transport, versions, retry }
    }

    pub fn has(&self, backend: &str) -> bool {
        self.versions.contains_key(backend)
    }

    pub fn version(&self, backend: &str) -> Option<&str> {
        self.versions.get(backend).map(String::as_str)
    }

    pub fn versions(&self) -> &BTreeMap<String, String> {
        &self.versions
    }

    /// Sends a request, retrying transient failures. All backend requests
    /// are queries, so repeating one is safe.
    pub fn call(&self, backend: &str, payload: Value) -> Result<Value, BackendError> {
        let version = self.versions.get(backend).ok_or_else(|| BackendError::NotConfigured(backend.to_string()))?;
        let request = Envelope { backend: backend.to_string(), version: version.clone(), payload };
        let mut attempt = 1;
        loop {
            match self.transport.call(&request) {
                Err(e) if e.is_retriable() && attempt < self.retry.attempts => {
                    log::warn!("{e}; retrying ({attempt}/{})", self.retry.attempts);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// [`Backends::call`] with typed request and response.
    pub fn call_as<Req: Serialize, Resp: DeserializeOwned>(&self, backend: &str, request: &Req) -> Result<Resp, BackendError> {
        let payload = serde_json::to_value(request).map_err(|e| BackendError::Malformed {
            backend: backend.to_string(),
            message: format!("request does not serialize: {e}"),
        })?;
        let value = self.call(backend, payload)?;
        serde_json::from_value(value)
            .map_err(|e| BackendError::Malformed { backend: backend.to_string(), message: e.to_string() })
    }
}

/// One HTTP endpoint per backend; the envelope is POSTed as JSON and the
/// response body is the payload.
#[derive(Debug)]
pub struct HttpTransport {
    endpoints: BTreeMap<String, (String, ureq::Agent)>,
}

impl HttpTransport {
    /// `endpoints` maps backend name to (URL, timeout).
    pub fn new(endpoints: BTreeMap<String, (String, Duration)>) -> Self {
        let endpoints = endpoints
            .into_iter()
            .map(|(name, (url, timeout))| {
                let agent: ureq::Agent =
                    ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
                (name, (url, agent))
            })
            .collect();
        HttpTransport { endpoints }
    }
}

impl Transport for HttpTransport {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
        let backend = request.backend.clone();
        let (url, agent) = self.endpoints.get(&backend).ok_or_else(|| BackendError::NotConfigured(backend.clone()))?;
        let body = serde_json::to_string(request).expect("envelope serializes");
        let mut resp = agent.post(url).header("content-type", "application/json").send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { backend: backend.clone() },
            other => BackendError::Transport { backend: backend.clone(), message: other.to_string() },
        })?;
        let code = resp.status().as_u16();
        if !(200..300).contains(&code) {
            return Err(BackendError::Status { backend, code });
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport { backend: backend.clone(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed { backend, message: e.to_string() })
    }
}
