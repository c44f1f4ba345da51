use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use crate::workflow::sha256_hex;

#[derive(Debug, Clone)]
pub struct StoredPayload {
    pub payload: Arc<Vec<u8>>,
    pub digest: String,
    pub run_id: String,
    pub created_at: SystemTime,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reference {0} already holds different bytes")]
pub struct WriteOnceViolation(pub String);

/// Write-once map from reference id to payload, scoped by run.
#[derive(Debug, Default)]
pub struct ProxyStore {
    entries: RwLock<HashMap<String, StoredPayload>>,
}

impl ProxyStore {
    /// Inserting identical bytes under an existing id is a no-op.
    pub fn insert(&self, ref_id: &str, run_id: &str, payload: Vec<u8>) -> Result<StoredPayload, WriteOnceViolation> {
        let digest = sha256_hex(&payload);
        let mut entries = self.entries.write().expect("store lock");
        if let Some(existing) = entries.get(ref_id) {
            return if existing.digest == digest && *existing.payload == payload {
                Ok(existing.clone())
            } else {
                Err(WriteOnceViolation(ref_id.to_string()))
            };
        }
        let entry = StoredPayload {
            payload: Arc::new(payload),
            digest,
            run_id: run_id.to_string(),
            created_at: SystemTime::now(),
        };
        entries.insert(ref_id.to_string(), entry.clone());
        Ok(entry)
    }

    pub fn get(&self, ref_id: &str) -> Option<StoredPayload> {
        self.entries.read().expect("store lock").get(ref_id).cloned()
    }

    pub fn contains(&self, ref_id: &str) -> bool {
        self.entries.read().expect("store lock").contains_key(ref_id)
    }

    /// Drops every entry of `run_id`, returning how many were removed.
    pub fn flush(&self, run_id: &str) -> usize {
        let mut entries = self.entries.write().expect("store lock");
        let before = entries.len();
        entries.retain(|_, e| e.run_id != run_id);
        before - entries.len()
    }

    pub fn count_for_run(&self, run_id: &str) -> usize {
        self.entries.read().expect("store lock").values().filter(|e| e.run_id == run_id).count()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once() {
        let s = ProxyStore::default();
        s.insert("a", "r1", b"xyz".to_vec()).unwrap();
        s.insert("a", "r1", b"xyz".to_vec()).unwrap();
        assert_eq!(s.insert("a", "r1", b"xy!".to_vec()).unwrap_err(), WriteOnceViolation("a".into()));
        assert_eq!(*s.get("a").unwrap().payload, b"xyz");
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn flush_is_run_scoped_and_idempotent() {
        let s = ProxyStore::default();
        for (id, run) in [("a", "r1"), ("b", "r1"), ("c", "r1"), ("d", "r2")] {
            s.insert(id, run, id.as_bytes().to_vec()).unwrap();
        }
        assert_eq!(s.flush("r1"), 3);
        assert_eq!(s.flush("r1"), 0);
        assert_eq!(s.flush("nope"), 0);
        assert_eq!(s.count_for_run("r1"), 0);
        assert!(s.contains("d"));
    }

    #[test]
    fn concurrent_identical_inserts() {
        let s = Arc::new(ProxyStore::default());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let s = s.clone();
                std::thread::spawn(move || s.insert("k", "r", vec![7; 1024]).map(|_| ()))
            })
            .collect();
        for h in handles {
            h.join().unwrap().unwrap();
        }
        assert_eq!(s.len(), 1);
    }
}
