use std::time::Duration;

use super::wire::{WireRequest, WireResponse};
use super::{check_request, GatewayError, GatewayErrorKind, SegmentRequest, SegmentResponse, Segmenter};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL of the service; requests go to `<endpoint>/segment`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first one.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: DEFAULT_BACKOFF,
        }
    }

    pub fn segment_url(&self) -> String {
        format!("{}/segment", self.endpoint.trim_end_matches('/'))
    }
}

/// HTTP client for a segmentation service.
pub struct RemoteSegmenter {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Result<SegmentResponse, GatewayErrorKind>),
    Retry(GatewayErrorKind),
}

impl RemoteSegmenter {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, body: &str, dims: (u32, u32), attempts: u32) -> Attempt {
        let result = self
            .agent
            .post(&self.config.segment_url())
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(GatewayErrorKind::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(GatewayErrorKind::Connect {
                    attempts,
                    detail: e.to_string(),
                })
            }
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(GatewayErrorKind::Timeout { attempts }),
            Err(e) => {
                return Attempt::Done(Err(GatewayErrorKind::Protocol(format!(
                    "unreadable response body: {e}"
                ))))
            }
        };
        if !(200..300).contains(&status) {
            let kind = GatewayErrorKind::Status { status, body: text };
            // Server-side failures may be transient; client errors are not.
            return if status >= 500 {
                Attempt::Retry(kind)
            } else {
                Attempt::Done(Err(kind))
            };
        }
        let decoded = serde_json::from_str::<WireResponse>(&text)
            .map_err(|e| GatewayErrorKind::Protocol(format!("malformed response JSON: {e}")))
            .and_then(|wire| wire.into_response(dims));
        Attempt::Done(decoded)
    }
}

impl Segmenter for RemoteSegmenter {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, GatewayError> {
        check_request(request)?;
        let fail = |kind| GatewayError::new(request, kind);
        let wire = WireRequest::from_request(request).map_err(fail)?;
        let body = serde_json::to_string(&wire).expect("request serializes");
        let dims = request.dims();

        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, dims, attempts) {
                Attempt::Done(result) => return result.map_err(fail),
                Attempt::Retry(kind) => {
                    log::warn!(
                        "segment request {} view {} attempt {attempts} failed: {kind}",
                        request.query_id,
                        request.view_index
                    );
                    if attempts > self.config.retries {
                        return Err(fail(kind));
                    }
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
}
