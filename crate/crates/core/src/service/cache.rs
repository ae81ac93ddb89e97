use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::agent::UserProfile;
use crate::exec::DirectCallCache;
use crate::lm::text::normalize;

/// Milliseconds since the Unix epoch, or any other monotone origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: Json,
    pub stored_ms: u64,
    pub ttl_ms: u64,
}

impl CacheEntry {
    pub fn is_expired(&self, now_ms: u64) -> bool {
        now_ms > self.stored_ms.saturating_add(self.ttl_ms)
    }
}

/// Hex SHA-256 of the user segment and the normalized query.
pub fn cache_key(segment: &str, query: &str) -> String {
    let mut h = Sha256::new();
    h.update(segment.trim().to_lowercase().as_bytes());
    h.update([0x1f]);
    h.update(normalize(query).as_bytes());
    hex::encode(h.finalize())
}

/// Tool payloads keyed by (current title, normalized query).
pub struct ResponseCache {
    entries: Mutex<HashMap<String, CacheEntry>>,
    ttl_ms: u64,
    clock: Arc<dyn Clock>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl std::fmt::Debug for ResponseCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponseCache")
            .field("ttl_ms", &self.ttl_ms)
            .field("len", &self.len())
            .finish()
    }
}

impl ResponseCache {
    pub fn new(ttl_ms: u64, clock: Arc<dyn Clock>) -> Self {
        ResponseCache {
            entries: Mutex::new(HashMap::new()),
            ttl_ms,
            clock,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    pub fn lookup(&self, key: &str) -> Option<Json> {
        let now = self.clock.now_ms();
        let mut entries = self.entries.lock().expect("cache lock");
        let found = match entries.get(key) {
            Some(e) if e.is_expired(now) => {
                entries.remove(key);
                None
            }
            Some(e) => Some(e.value.clone()),
            None => None,
        };
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn store(&self, key: &str, value: Json, ttl_ms: u64) {
        let entry = CacheEntry {
            key: key.to_string(),
            value,
            stored_ms: self.clock.now_ms(),
            ttl_ms,
        };
        self.entries.lock().expect("cache lock").insert(key.to_string(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(hits, misses)` since construction.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

impl DirectCallCache for ResponseCache {
    fn lookup(&self, profile: &UserProfile, query: &str) -> Option<Json> {
        ResponseCache::lookup(self, &cache_key(&profile.current_title, query))
    }

    fn store(&self, profile: &UserProfile, query: &str, payload: &Json) {
        ResponseCache::store(
            self,
            &cache_key(&profile.current_title, query),
            payload.clone(),
            self.ttl_ms,
        );
    }
}
