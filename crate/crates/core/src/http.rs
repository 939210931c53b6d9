//! Blocking JSON-over-HTTP with bounded retries, shared by remote providers.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tracing::debug;

#[derive(Debug, Clone, Error)]
#[error("{message} (after {attempts} attempt(s))")]
pub struct HttpFailure {
    pub attempts: u32,
    pub message: String,
    /// Whether another attempt might succeed (transport errors, 429, 5xx).
    pub retryable: bool,
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    max_attempts: u32,
    backoff: Duration,
}

impl HttpClient {
    pub fn new(timeout: Duration, max_attempts: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            max_attempts: max_attempts.max(1),
            backoff: Duration::from_millis(200),
        }
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<R, HttpFailure> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.try_once(url, bearer, body) {
                Ok(value) => return Ok(value),
                Err((message, retryable)) => {
                    if !retryable || attempt >= self.max_attempts {
                        return Err(HttpFailure { attempts: attempt, message, retryable });
                    }
                    debug!(attempt, %message, "retrying request to {url}");
                    thread::sleep(self.backoff * attempt);
                }
            }
        }
    }

    fn try_once<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<R, (String, bool)> {
        let mut request = self.agent.post(url);
        if let Some(token) = bearer {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| (e.to_string(), true))?;
        let status = response.status().as_u16();
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err((format!("HTTP status {status} from {url}"), retryable));
        }
        response
            .body_mut()
            .read_json::<R>()
            .map_err(|e| (format!("invalid response body: {e}"), false))
    }
}
