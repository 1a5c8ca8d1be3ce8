use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::ErrorBody;

const MAX_BODY: u64 = 512 * 1024 * 1024;

/// Blocking JSON-over-HTTP client for a model service.
#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    base: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl JsonClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self> {
        let base = endpoint.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(Error::InvalidConfig(format!(
                "endpoint must be an http(s) URL, got {endpoint:?}"
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            base,
            timeout,
            agent,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base, path);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| self.map_err(&url, e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_string()
            .map_err(|e| self.map_err(&url, e))?;
        if !(200..300).contains(&status) {
            let msg = serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or(text);
            return Err(match status {
                503 => Error::BackendUnavailable(format!("{url}: {msg}")),
                _ => Error::Protocol(format!("{url}: HTTP {status}: {msg}")),
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("{url}: malformed response: {e}")))
    }

    fn map_err(&self, url: &str, e: ureq::Error) -> Error {
        match e {
            ureq::Error::Timeout(_) => Error::Timeout(self.timeout),
            other => Error::BackendUnavailable(format!("{url}: {other}")),
        }
    }
}
