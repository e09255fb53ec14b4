//! HTTP oracle client.
//!
//! Protocol: `POST <endpoint>` with the candidate image as a PNG body
//! (`Content-Type: image/png`). The server answers `200 OK` with JSON:
//!
//! ```json
//! {
//!   "label_id": 3,
//!   "label_name": "Stop",
//!   "confidence": 0.87,
//!   "distribution": [0.01, 0.02, 0.10, 0.87]
//! }
//! ```
//!
//! `distribution` is optional; when present it must be a probability
//! vector (entries in [0, 1] summing to 1 within 1e-6) whose `label_id`
//! entry is the maximum and matches `confidence` within 1e-6. Connection
//! failures and timeouts are transport errors (retryable); non-2xx
//! statuses and malformed bodies are protocol errors.

use std::time::Duration;

use serde::Deserialize;
use snowball_core::{Oracle, OracleError, Raster, Verdict};

/// Default request timeout when the manifest does not override it.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Environment variable that overrides the configured endpoint URL.
pub const ENDPOINT_ENV: &str = "SNOWBALL_ENDPOINT";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireVerdict {
    label_id: u32,
    label_name: String,
    confidence: f64,
    #[serde(default)]
    distribution: Option<Vec<f64>>,
}

/// Blocking HTTP classifier client implementing [`Oracle`].
pub struct RemoteClassifier {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteClassifier {
    /// Builds a client for `endpoint` with the given request timeout.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| OracleError::Transport(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }

    #[must_use]
    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Reads the endpoint override from [`ENDPOINT_ENV`], if set and
    /// non-empty.
    #[must_use]
    pub fn endpoint_override() -> Option<String> {
        std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty())
    }

    fn check(wire: WireVerdict) -> Result<Verdict, OracleError> {
        let protocol = |msg: String| Err(OracleError::Protocol(msg));
        if wire.label_name.is_empty() {
            return protocol("label_name is empty".into());
        }
        if !(wire.confidence.is_finite() && (0.0..=1.0).contains(&wire.confidence)) {
            return protocol(format!("confidence {} is outside [0, 1]", wire.confidence));
        }
        if let Some(dist) = &wire.distribution {
            if dist.is_empty() {
                return protocol("distribution is empty".into());
            }
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            for &p in dist {
                if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                    return protocol(format!("distribution entry {p} is outside [0, 1]"));
                }
                sum += p;
                max = max.max(p);
            }
            if (sum - 1.0).abs() > 1e-6 {
                return protocol(format!("distribution sums to {sum}, expected 1"));
            }
            let id = wire.label_id as usize;
            if id >= dist.len() {
                return protocol(format!(
                    "label_id {} is outside the {}-entry distribution",
                    wire.label_id,
                    dist.len()
                ));
            }
            if (dist[id] - max).abs() > 1e-9 {
                return protocol(format!(
                    "distribution[{id}] = {} is not the maximum entry ({max})",
                    dist[id]
                ));
            }
            if (dist[id] - wire.confidence).abs() > 1e-6 {
                return protocol(format!(
                    "confidence {} does not match distribution[{id}] = {}",
                    wire.confidence, dist[id]
                ));
            }
        }
        Ok(Verdict {
            label: snowball_core::ClassLabel::new(wire.label_id, wire.label_name),
            confidence: wire.confidence,
            distribution: wire.distribution,
        })
    }
}

impl Oracle for RemoteClassifier {
    fn classify(&self, image: &Raster) -> Result<Verdict, OracleError> {
        let png = image
            .encode_png()
            .map_err(|e| OracleError::InvalidInput(format!("cannot encode request PNG: {e}")))?;
        let response = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(png)
            .send()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(OracleError::Protocol(format!(
                "server answered {status}"
            )));
        }
        let wire: WireVerdict = response
            .json()
            .map_err(|e| OracleError::Protocol(format!("malformed verdict body: {e}")))?;
        Self::check(wire)
    }
}
