use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("connect: {0}")]
    Connect(String),
    #[error("timeout")]
    Timeout,
    #[error("HTTP {0}")]
    Status(u16),
}

pub struct HttpRequest<'a> {
    pub url: &'a str,
    pub token: Option<&'a str>,
    pub body: &'a [u8],
    pub timeout: Duration,
}

/// Sends one JSON POST and returns the response body.
pub trait Transport: Send + Sync {
    fn post(&self, req: &HttpRequest<'_>) -> Result<Vec<u8>, TransportError>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(&self, req: &HttpRequest<'_>) -> Result<Vec<u8>, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(req.timeout).build();
        let mut r = agent.post(req.url).set("Content-Type", "application/json");
        if let Some(tok) = req.token {
            r = r.set("Authorization", &format!("Bearer {tok}"));
        }
        match r.send_bytes(req.body) {
            Ok(resp) => {
                let mut buf = Vec::new();
                resp.into_reader()
                    .read_to_end(&mut buf)
                    .map_err(|e| classify_io(&e))?;
                Ok(buf)
            }
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Status(code)),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.to_lowercase().contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Connect(msg))
                }
            }
        }
    }
}

fn classify_io(e: &std::io::Error) -> TransportError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => TransportError::Timeout,
        _ => TransportError::Connect(e.to_string()),
    }
}

/// Refuses every request.
#[derive(Debug, Default)]
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn post(&self, _req: &HttpRequest<'_>) -> Result<Vec<u8>, TransportError> {
        Err(TransportError::Connect("offline transport".into()))
    }
}

/// Wraps a transport and counts every request that reaches it.
pub struct InstrumentedTransport {
    inner: Arc<dyn Transport>,
    calls: AtomicUsize,
}

impl InstrumentedTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for InstrumentedTransport {
    fn post(&self, req: &HttpRequest<'_>) -> Result<Vec<u8>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.post(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_is_connect_error() {
        // Port 9 on localhost: nothing listens in the sandbox.
        let r = UreqTransport.post(&HttpRequest {
            url: "http://127.0.0.1:9/detect",
            token: None,
            body: b"{}",
            timeout: Duration::from_secs(2),
        });
        assert!(matches!(r, Err(TransportError::Connect(_))), "{r:?}");
    }
}
