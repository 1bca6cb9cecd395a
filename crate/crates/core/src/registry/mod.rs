//! Registration node: keeps the active peer list and answers register,
//! unregister and peer-list requests. It never contacts peers.

mod client;
mod server;

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{normalize_base_url, RegistryClient};
pub use server::{registry_router, RegistryServer};

use crate::clock;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("no registry reachable: {0}")]
    Unreachable(String),
    #[error("registry {url} answered {status}: {body}")]
    Rejected {
        url: String,
        status: u16,
        body: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerRecord {
    pub hostname: String,
    pub address: String,
    pub registered_at: u64,
}

pub fn validate_hostname(hostname: &str) -> Result<(), RegistryError> {
    if hostname.is_empty() {
        return Err(RegistryError::BadRequest("empty hostname".into()));
    }
    if hostname.len() > 255
        || hostname
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || c == ',')
    {
        return Err(RegistryError::BadRequest(format!(
            "invalid hostname `{hostname}`"
        )));
    }
    Ok(())
}

/// Accepts `host:port` with a non-empty host and a port in 1..=65535.
pub fn validate_address(address: &str) -> Result<(), RegistryError> {
    let bad =
        || RegistryError::BadRequest(format!("malformed address `{address}`, expected host:port"));
    let (host, port) = address.rsplit_once(':').ok_or_else(bad)?;
    let host = host.trim_start_matches('[').trim_end_matches(']');
    if host.is_empty() || host.contains(char::is_whitespace) {
        return Err(bad());
    }
    match port.parse::<u16>() {
        Ok(p) if p >= 1 => Ok(()),
        _ => Err(bad()),
    }
}

/// The active peer list. All mutations and snapshots go through one lock,
/// so every observer sees a prefix of the linearized operation sequence.
#[derive(Debug, Default)]
pub struct Registry {
    peers: Mutex<BTreeMap<String, PeerRecord>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the record for `hostname`.
    pub fn register(&self, hostname: &str, address: &str) -> Result<(), RegistryError> {
        validate_hostname(hostname)?;
        validate_address(address)?;
        let record = PeerRecord {
            hostname: hostname.to_string(),
            address: address.to_string(),
            registered_at: clock::wall_ms(),
        };
        self.peers
            .lock()
            .unwrap()
            .insert(hostname.to_string(), record);
        Ok(())
    }

    /// Removes `hostname`; unknown names are accepted silently.
    pub fn unregister(&self, hostname: &str) -> Result<(), RegistryError> {
        if hostname.is_empty() {
            return Err(RegistryError::BadRequest("empty hostname".into()));
        }
        self.peers.lock().unwrap().remove(hostname);
        Ok(())
    }

    /// Snapshot sorted by hostname.
    pub fn peers(&self) -> Vec<PeerRecord> {
        self.peers.lock().unwrap().values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.peers.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
