use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::extract_target;
use super::{RewriteConfig, RewriteSource};
use crate::detect::Detector;
use crate::report::Report;
use crate::scrub::scrub;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub model: String,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    completion: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("network: {0}")]
    Network(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("unknown transport `{0}`")]
    Unknown(String),
}

/// A text-completion endpoint.
pub trait CompletionPort: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError>;
    fn source(&self) -> RewriteSource;
}

/// Offline stand-in: answers with the rule detector's scrubbed target text.
pub struct MockTransport {
    detector: Detector,
}

impl MockTransport {
    pub fn new(detector: Detector) -> Self {
        MockTransport { detector }
    }
}

impl CompletionPort for MockTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let target = extract_target(&request.prompt)
            .ok_or_else(|| TransportError::BadResponse("prompt has no target".into()))?;
        Ok(scrub(&self.detector.detect(&Report::new("mock", target))).text)
    }

    fn source(&self) -> RewriteSource {
        RewriteSource::Mock
    }
}

/// JSON-over-HTTP client. POSTs a [`CompletionRequest`] and expects
/// `{"completion": "..."}` back.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            url: url.into(),
            api_key,
            agent,
        }
    }

    pub fn from_config(config: &RewriteConfig) -> Self {
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        Self::new(
            config.endpoint_url.clone(),
            api_key,
            Duration::from_secs(config.timeout_secs),
        )
    }
}

impl CompletionPort for HttpTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let body: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::BadResponse(e.to_string()))?;
        Ok(body.completion)
    }

    fn source(&self) -> RewriteSource {
        RewriteSource::External
    }
}

/// Registered transport names.
pub const TRANSPORTS: &[&str] = &["mock", "http"];

/// Builds a transport by name.
pub fn transport_by_name(
    name: &str,
    config: &RewriteConfig,
    detector: &Detector,
) -> Result<Box<dyn CompletionPort>, TransportError> {
    match name {
        "mock" => Ok(Box::new(MockTransport::new(detector.clone()))),
        "http" => Ok(Box::new(HttpTransport::from_config(config))),
        other => Err(TransportError::Unknown(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// One-shot HTTP server returning `body` with `status`; yields the request body.
    fn serve_once(status: u16, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(buf).unwrap()
        });
        (url, handle)
    }

    fn request() -> CompletionRequest {
        CompletionRequest {
            prompt: "p".into(),
            temperature: 0.3,
            model: "m".into(),
            max_tokens: 8,
        }
    }

    #[test]
    fn http_round_trip() {
        let (url, handle) = serve_once(200, r#"{"completion":"  Heart size is normal. "}"#);
        let t = HttpTransport::new(url, None, Duration::from_secs(5));
        assert_eq!(t.complete(&request()).unwrap(), "  Heart size is normal. ");
        let sent: CompletionRequest = serde_json::from_str(&handle.join().unwrap()).unwrap();
        assert_eq!(sent, request());
    }

    #[test]
    fn http_error_status_is_transport_error() {
        let (url, handle) = serve_once(500, r#"{"error":"boom"}"#);
        let t = HttpTransport::new(url, None, Duration::from_secs(5));
        assert!(t.complete(&request()).is_err());
        handle.join().unwrap();
    }

    #[test]
    fn registry_names() {
        let cfg = RewriteConfig::default();
        let det = Detector::bundled();
        for name in TRANSPORTS {
            assert!(transport_by_name(name, &cfg, &det).is_ok());
        }
        assert!(transport_by_name("carrier-pigeon", &cfg, &det).is_err());
    }
}
