//! Clients for the four external model services (detection, VQA, chat,
//! caption) behind neutral JSON-over-HTTP protocols, with a fixture layer
//! that records and replays transcripts keyed by request digest.
//!
//! * `live`: POST the canonical JSON body to the configured endpoint.
//! * `record`: live, and write `fixtures/{service}/{digest}.json`.
//! * `replay`: read the transcript; a missing key is [`ClientError::ReplayMiss`]
//!   and the transport is never touched.

mod fixtures;
mod protocol;
pub mod sim;
mod transport;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixtures::{FixtureStore, Transcript};
pub use protocol::*;
pub use transport::{HttpRequest, InstrumentedTransport, OfflineTransport, Transport, TransportError, UreqTransport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    /// Raised while constructing a client, before any request is sent.
    #[error("client configuration: {0}")]
    Config(String),
    #[error("connect: {0}")]
    Connect(String),
    #[error("request timed out")]
    Timeout,
    #[error("service returned HTTP {0}")]
    Status(u16),
    #[error("response failed schema validation (payload digest {digest}): {detail}")]
    Schema { digest: String, detail: String },
    #[error("no {service} fixture for request digest {digest}")]
    ReplayMiss { service: Service, digest: String },
    #[error("fixture store: {0}")]
    Fixture(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            Self::Connect(_) | Self::Timeout => true,
            Self::Status(code) => *code >= 500,
            _ => false,
        }
    }
}

impl From<TransportError> for ClientError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Connect(m) => Self::Connect(m),
            TransportError::Timeout => Self::Timeout,
            TransportError::Status(c) => Self::Status(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Detect,
    Vqa,
    Chat,
    Caption,
}

impl Service {
    pub const ALL: [Service; 4] = [Self::Detect, Self::Vqa, Self::Chat, Self::Caption];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Detect => "detect",
            Self::Vqa => "vqa",
            Self::Chat => "chat",
            Self::Caption => "caption",
        }
    }

    pub fn url_var(self) -> String {
        format!("HALLU_{}_URL", self.as_str().to_uppercase())
    }

    pub fn token_var(self) -> String {
        format!("HALLU_{}_TOKEN", self.as_str().to_uppercase())
    }
}

impl std::fmt::Display for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff: Duration::from_millis(250),
        }
    }
}

/// Per-service settings. `url` falls back to `HALLU_{SERVICE}_URL`; the token
/// always comes from `HALLU_{SERVICE}_TOKEN`.
#[derive(Debug, Clone)]
pub struct ClientSettings {
    pub mode: Mode,
    pub url: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for ClientSettings {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            url: None,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    url: String,
    token: String,
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Canonical request body used for the fixture digest: the JSON value with
/// every inline image payload (`data_b64`) removed. Images stay identified
/// by their `sha256`.
pub fn digest_body(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| k.as_str() != "data_b64")
                .map(|(k, v)| (k.clone(), digest_body(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(digest_body).collect()),
        other => other.clone(),
    }
}

/// SHA-256 hex of the canonical (sorted-key, compact) JSON encoding.
pub fn request_digest(v: &Value) -> String {
    let bytes = serde_json::to_vec(&digest_body(v)).expect("JSON values always serialize");
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ServiceClient {
    service: Service,
    mode: Mode,
    endpoint: Option<Endpoint>,
    transport: Arc<dyn Transport>,
    store: Option<Arc<FixtureStore>>,
    limiter: Limiter,
    retry: RetryPolicy,
    timeout: Duration,
}

impl std::fmt::Debug for ServiceClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceClient")
            .field("service", &self.service)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl ServiceClient {
    /// Build a client, failing fast on missing endpoint, credentials or
    /// fixture directory. `env` looks up environment variables.
    pub fn connect(
        service: Service,
        settings: &ClientSettings,
        env: &dyn Fn(&str) -> Option<String>,
        transport: Arc<dyn Transport>,
        store: Option<Arc<FixtureStore>>,
    ) -> Result<Self, ClientError> {
        let endpoint = match settings.mode {
            Mode::Replay => {
                if store.is_none() {
                    return Err(ClientError::Config(format!("{service}: replay mode needs a fixtures directory")));
                }
                None
            }
            Mode::Live | Mode::Record => {
                let url = settings
                    .url
                    .clone()
                    .or_else(|| env(&service.url_var()))
                    .ok_or_else(|| ClientError::Config(format!("{service}: {} is not set", service.url_var())))?;
                let token = env(&service.token_var())
                    .ok_or_else(|| ClientError::Config(format!("{service}: {} is not set", service.token_var())))?;
                if settings.mode == Mode::Record && store.is_none() {
                    return Err(ClientError::Config(format!("{service}: record mode needs a fixtures directory")));
                }
                Some(Endpoint { url, token })
            }
        };
        Ok(Self {
            service,
            mode: settings.mode,
            endpoint,
            transport,
            store,
            limiter: Limiter::new(settings.max_in_flight),
            retry: settings.retry,
            timeout: settings.timeout,
        })
    }

    pub fn service(&self) -> Service {
        self.service
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn call<Req, Resp>(&self, req: &Req) -> Result<Resp, ClientError>
    where
        Req: Serialize,
        Resp: DeserializeOwned + Validate,
    {
        let body = serde_json::to_value(req).map_err(|e| ClientError::Config(e.to_string()))?;
        let key = digest_body(&body);
        let digest = request_digest(&body);

        if self.mode == Mode::Replay {
            let store = self.store.as_ref().expect("checked at construction");
            let t = store
                .read(self.service, &digest)?
                .ok_or_else(|| ClientError::ReplayMiss { service: self.service, digest: digest.clone() })?;
            return decode::<Resp>(t.response, &digest);
        }

        let endpoint = self.endpoint.as_ref().expect("checked at construction");
        let wire = serde_json::to_vec(&body).expect("JSON values always serialize");
        let payload = {
            let _permit = self.limiter.acquire();
            self.send_with_retry(endpoint, &wire)?
        };
        let value: Value = serde_json::from_slice(&payload).map_err(|e| ClientError::Schema {
            digest: sha256_hex(&payload),
            detail: e.to_string(),
        })?;
        let resp = decode::<Resp>(value.clone(), &sha256_hex(&payload))?;
        if self.mode == Mode::Record {
            let store = self.store.as_ref().expect("checked at construction");
            store.write(&Transcript {
                service: self.service,
                digest,
                request: key,
                response: value,
            })?;
        }
        Ok(resp)
    }

    fn send_with_retry(&self, ep: &Endpoint, body: &[u8]) -> Result<Vec<u8>, ClientError> {
        let url = format!("{}/{}", ep.url.trim_end_matches('/'), self.service.as_str());
        let mut attempt = 0;
        loop {
            let r = self.transport.post(&HttpRequest {
                url: &url,
                token: Some(&ep.token),
                body,
                timeout: self.timeout,
            });
            match r.map_err(ClientError::from) {
                Ok(bytes) => return Ok(bytes),
                Err(e) if e.retryable() && attempt < self.retry.max_retries => {
                    let wait = self.retry.base_backoff * 2u32.pow(attempt);
                    log::warn!("{} request failed ({e}); retry {} in {:?}", self.service, attempt + 1, wait);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn decode<Resp: DeserializeOwned + Validate>(v: Value, digest: &str) -> Result<Resp, ClientError> {
    let resp: Resp = serde_json::from_value(v).map_err(|e| ClientError::Schema {
        digest: digest.to_string(),
        detail: e.to_string(),
    })?;
    resp.validate().map_err(|detail| ClientError::Schema {
        digest: digest.to_string(),
        detail,
    })?;
    Ok(resp)
}

pub trait DetectClient: Sync {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, ClientError>;
}

pub trait VqaClient: Sync {
    fn vqa(&self, req: &VqaRequest) -> Result<VqaResponse, ClientError>;
}

pub trait ChatClient: Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

pub trait CaptionClient: Sync {
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, ClientError>;
}

/// The four service clients; a service left unconfigured errors on use.
#[derive(Debug, Default)]
pub struct ModelClients {
    pub detect: Option<ServiceClient>,
    pub vqa: Option<ServiceClient>,
    pub chat: Option<ServiceClient>,
    pub caption: Option<ServiceClient>,
}

impl ModelClients {
    /// Connect the listed services with shared settings, transport and store.
    pub fn connect(
        services: &[Service],
        settings: &ClientSettings,
        env: &dyn Fn(&str) -> Option<String>,
        transport: Arc<dyn Transport>,
        store: Option<Arc<FixtureStore>>,
    ) -> Result<Self, ClientError> {
        let mut out = Self::default();
        for &s in services {
            let c = ServiceClient::connect(s, settings, env, transport.clone(), store.clone())?;
            match s {
                Service::Detect => out.detect = Some(c),
                Service::Vqa => out.vqa = Some(c),
                Service::Chat => out.chat = Some(c),
                Service::Caption => out.caption = Some(c),
            }
        }
        Ok(out)
    }

    fn get(&self, s: Service) -> Result<&ServiceClient, ClientError> {
        let c = match s {
            Service::Detect => &self.detect,
            Service::Vqa => &self.vqa,
            Service::Chat => &self.chat,
            Service::Caption => &self.caption,
        };
        c.as_ref()
            .ok_or_else(|| ClientError::Config(format!("{s} service is not configured")))
    }
}

impl DetectClient for ModelClients {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, ClientError> {
        self.get(Service::Detect)?.call(req)
    }
}

impl VqaClient for ModelClients {
    fn vqa(&self, req: &VqaRequest) -> Result<VqaResponse, ClientError> {
        self.get(Service::Vqa)?.call(req)
    }
}

impl ChatClient for ModelClients {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        self.get(Service::Chat)?.call(req)
    }
}

impl CaptionClient for ModelClients {
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, ClientError> {
        self.get(Service::Caption)?.call(req)
    }
}
