use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{PeerRecord, RegistryError};

/// Adds an `http://` scheme when missing and strips trailing slashes.
pub fn normalize_base_url(url: &str) -> String {
    let url = url.trim().trim_end_matches('/');
    if url.starts_with("http://") || url.starts_with("https://") {
        url.to_string()
    } else {
        format!("http://{url}")
    }
}

/// Talks to an ordered list of registries, using the first that answers.
#[derive(Debug, Clone)]
pub struct RegistryClient {
    urls: Vec<String>,
    http: reqwest::Client,
}

#[derive(Deserialize)]
struct PeersBody {
    peers: Vec<PeerRecord>,
}

impl RegistryClient {
    pub fn new(urls: &[String], timeout: Duration) -> Result<Self, RegistryError> {
        if urls.is_empty() {
            return Err(RegistryError::BadRequest("no registry addresses".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .no_proxy()
            .build()
            .map_err(|e| RegistryError::Unreachable(e.to_string()))?;
        Ok(Self {
            urls: urls.iter().map(|u| normalize_base_url(u)).collect(),
            http,
        })
    }

    pub fn urls(&self) -> &[String] {
        &self.urls
    }

    /// Tries each registry in order; returns the first answer (2xx or
    /// 4xx). Transport failures and 5xx move on to the next one.
    async fn first_reachable<T>(
        &self,
        mut call: impl FnMut(&str) -> reqwest::RequestBuilder,
        decode: impl Fn(&[u8]) -> Result<T, String>,
    ) -> Result<(String, T), RegistryError> {
        let mut failures = Vec::new();
        for url in &self.urls {
            match call(url).send().await {
                Ok(resp) if resp.status().is_server_error() => {
                    failures.push(format!("{url}: HTTP {}", resp.status()));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let body = match resp.bytes().await {
                        Ok(b) => b,
                        Err(e) => {
                            failures.push(format!("{url}: {e}"));
                            continue;
                        }
                    };
                    if !status.is_success() {
                        return Err(RegistryError::Rejected {
                            url: url.clone(),
                            status: status.as_u16(),
                            body: String::from_utf8_lossy(&body).into_owned(),
                        });
                    }
                    return decode(&body)
                        .map(|v| (url.clone(), v))
                        .map_err(|e| RegistryError::Unreachable(format!("{url}: {e}")));
                }
                Err(e) => failures.push(format!("{url}: {e}")),
            }
        }
        Err(RegistryError::Unreachable(failures.join("; ")))
    }

    /// Registers with the first reachable registry and returns its URL.
    pub async fn register(&self, hostname: &str, address: &str) -> Result<String, RegistryError> {
        let body =
            serde_json::to_vec(&json!({ "hostname": hostname, "address": address })).unwrap();
        self.first_reachable(
            |u| {
                self.http
                    .post(format!("{u}/register"))
                    .header("content-type", "application/json")
                    .body(body.clone())
            },
            |_| Ok(()),
        )
        .await
        .map(|(u, ())| u)
    }

    pub async fn unregister(&self, hostname: &str) -> Result<String, RegistryError> {
        let body = serde_json::to_vec(&json!({ "hostname": hostname })).unwrap();
        self.first_reachable(
            |u| {
                self.http
                    .post(format!("{u}/unregister"))
                    .header("content-type", "application/json")
                    .body(body.clone())
            },
            |_| Ok(()),
        )
        .await
        .map(|(u, ())| u)
    }

    pub async fn peers(&self) -> Result<Vec<PeerRecord>, RegistryError> {
        self.first_reachable(
            |u| self.http.get(format!("{u}/peers")),
            |b| {
                serde_json::from_slice::<PeersBody>(b)
                    .map(|p| p.peers)
                    .map_err(|e| e.to_string())
            },
        )
        .await
        .map(|(_, p)| p)
    }
}
