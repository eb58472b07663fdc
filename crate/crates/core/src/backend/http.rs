//! Blocking HTTP+JSON client for the inference server.
//!
//! Endpoints: `POST /v1/qa`, `POST /v1/ed`, `GET /v1/health`. Transport
//! failures and 5xx responses are retried with exponential backoff; other
//! failures surface immediately as protocol errors.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::BackendError;

use super::{EdBackend, EdRequest, EntityGuess, QaBackend, QaRequest, SpanAnswer};

/// Environment variable consulted when no backend URL is given explicitly.
pub const BACKEND_URL_ENV: &str = "KBC_BACKEND_URL";

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub max_in_flight: usize,
    pub retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            max_in_flight: 8,
            retries: 3,
            initial_backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub models: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct QaResponse {
    answers: Vec<SpanAnswer>,
}

#[derive(Deserialize)]
struct EdResponse {
    entities: Vec<EntityGuess>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    released: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    slots: Slots,
    next_id: AtomicU64,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Retry(BackendError),
    Fail(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            slots: Slots::new(config.max_in_flight),
            config,
            agent,
            next_id: AtomicU64::new(1),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    pub fn health(&self) -> Result<HealthStatus, BackendError> {
        let url = self.url("/v1/health");
        self.with_retries(|| {
            let response = self
                .agent
                .get(&url)
                .call()
                .map_err(|e| Attempt::Retry(BackendError::Transport(e.to_string())))?;
            read_body(response)
        })
    }

    /// Fails unless the health endpoint reports `"ok"`.
    pub fn check_health(&self) -> Result<HealthStatus, BackendError> {
        let health = self.health()?;
        if health.status != "ok" {
            return Err(BackendError::protocol(
                format!("backend reports status {:?}", health.status),
                &serde_json::to_string(&health).unwrap_or_default(),
            ));
        }
        Ok(health)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = self.url(path);
        let _slot = self.slots.acquire();
        let request_id = self.next_id.fetch_add(1, Ordering::Relaxed).to_string();
        self.with_retries(|| {
            let response = self
                .agent
                .post(&url)
                .header("X-Request-Id", &request_id)
                .send_json(body)
                .map_err(|e| Attempt::Retry(BackendError::Transport(e.to_string())))?;
            read_body(response)
        })
    }

    fn with_retries<T>(&self, mut f: impl FnMut() -> Result<T, Attempt>) -> Result<T, BackendError> {
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match f() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.config.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::debug!("retrying after {e} (attempt {})", attempt + 1);
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

fn read_body<T: DeserializeOwned>(mut response: ureq::http::Response<ureq::Body>) -> Result<T, Attempt> {
    let status = response.status();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| Attempt::Retry(BackendError::Transport(e.to_string())))?;
    if status.is_server_error() {
        return Err(Attempt::Retry(BackendError::Transport(format!(
            "server returned {status}: {}",
            crate::error::excerpt(&text, 200)
        ))));
    }
    if !status.is_success() {
        return Err(Attempt::Fail(BackendError::protocol(
            format!("server returned {status}"),
            &text,
        )));
    }
    serde_json::from_str(&text)
        .map_err(|e| Attempt::Fail(BackendError::protocol(format!("malformed response: {e}"), &text)))
}

impl QaBackend for HttpBackend {
    fn answer(&self, request: &QaRequest) -> Result<Vec<SpanAnswer>, BackendError> {
        self.post::<_, QaResponse>("/v1/qa", request).map(|r| r.answers)
    }
}

impl EdBackend for HttpBackend {
    fn disambiguate(&self, request: &EdRequest) -> Result<Vec<EntityGuess>, BackendError> {
        self.post::<_, EdResponse>("/v1/ed", request).map(|r| r.entities)
    }
}
