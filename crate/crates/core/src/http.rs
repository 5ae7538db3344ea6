//! Blocking JSON-over-HTTP client shared by the remote backend and the
//! remote embedder: bounded in-flight requests, bearer auth and a small
//! retry loop.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAX_ATTEMPTS: usize = 3;
pub const DEFAULT_PERMITS: usize = 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Counting semaphore.
#[derive(Debug)]
pub struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct PermitGuard<'a>(&'a Permits);

impl Permits {
    pub fn new(count: usize) -> Self {
        Self {
            free: Mutex::new(count.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub permits: usize,
    /// First retry waits this long; each later retry doubles it.
    pub backoff: Duration,
}

impl HttpSettings {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
            permits: DEFAULT_PERMITS,
            backoff: Duration::from_millis(500),
        }
    }
}

enum Outcome {
    Done(Value),
    Retry(Error),
    Fail(Error),
}

pub struct JsonClient {
    settings: HttpSettings,
    client: Client,
    permits: Permits,
}

impl JsonClient {
    pub fn new(settings: HttpSettings) -> Result<Self> {
        let client = Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        let permits = Permits::new(settings.permits);
        Ok(Self {
            settings,
            client,
            permits,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.settings.base_url
    }

    fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.settings.base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = self.url(path);
        let _permit = self.permits.acquire();
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                thread::sleep(self.settings.backoff * (1 << (attempt - 1)));
            }
            match self.send_once(&url, body) {
                Outcome::Done(v) => return Ok(v),
                Outcome::Fail(e) => return Err(e),
                Outcome::Retry(e) => {
                    log::warn!("request to {url} failed (attempt {}): {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or(Error::ProviderUnavailable(url)))
    }

    fn send_once(&self, url: &str, body: &Value) -> Outcome {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Outcome::Retry(Error::ProviderUnavailable(e.to_string())),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Outcome::Retry(Error::RateLimited {
                attempts: MAX_ATTEMPTS,
            });
        }
        if status.is_server_error() {
            return Outcome::Retry(Error::ProviderUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Outcome::Fail(Error::ProviderUnavailable(format!("HTTP {status}: {text}")));
        }
        match resp.json::<Value>() {
            Ok(v) => Outcome::Done(v),
            Err(e) => Outcome::Fail(Error::ProviderUnavailable(format!(
                "bad response body: {e}"
            ))),
        }
    }
}
