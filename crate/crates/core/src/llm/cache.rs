use super::{GenerationRequest, ProviderError};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response_text: String,
    pub created_at: DateTime<Utc>,
}

/// Response cache, in memory and optionally mirrored to one JSON file per key.
/// File writes go through a temporary file and a rename so readers never see
/// a partial entry.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheEntry>>,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache { dir: None, entries: Mutex::new(HashMap::new()), tmp_counter: AtomicU64::new(0) }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir: Some(dir),
            entries: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    fn path_for(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        if let Some(hit) = self.entries.lock().unwrap().get(key) {
            return Some(hit.clone());
        }
        let dir = self.dir.as_ref()?;
        let bytes = fs::read(Self::path_for(dir, key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        self.entries.lock().unwrap().insert(key.to_string(), entry.clone());
        Some(entry)
    }

    pub fn put(&self, key: &str, response_text: &str) -> Result<(), String> {
        let entry = CacheEntry {
            key: key.to_string(),
            response_text: response_text.to_string(),
            created_at: Utc::now(),
        };
        if let Some(dir) = &self.dir {
            let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
            let tmp = dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
            let bytes = serde_json::to_vec(&entry).map_err(|e| e.to_string())?;
            fs::write(&tmp, bytes).map_err(|e| e.to_string())?;
            fs::rename(&tmp, Self::path_for(dir, key)).map_err(|e| e.to_string())?;
        }
        self.entries.lock().unwrap().insert(key.to_string(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub key: String,
    pub request: serde_json::Value,
    pub sample_index: u32,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: DateTime<Utc>,
}

/// Append-only log of provider exchanges, one JSON record per line.
pub struct AuditLog {
    path: Option<PathBuf>,
    records: Mutex<Vec<AuditRecord>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog { path: None, records: Mutex::new(Vec::new()) }
    }

    pub fn to_file(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog { path: Some(path), records: Mutex::new(Vec::new()) })
    }

    pub fn append(
        &self,
        key: &str,
        request: &GenerationRequest,
        sample_index: u32,
        result: &Result<String, ProviderError>,
    ) -> Result<(), String> {
        self.append_record(AuditRecord {
            key: key.to_string(),
            request: serde_json::to_value(request).map_err(|e| e.to_string())?,
            sample_index,
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            timestamp: Utc::now(),
        })
    }

    /// Appends an arbitrary record (used for non-LLM exchanges such as article fetches).
    pub fn append_record(&self, record: AuditRecord) -> Result<(), String> {
        let mut records = self.records.lock().unwrap();
        if let Some(path) = &self.path {
            let mut line = serde_json::to_vec(&record).map_err(|e| e.to_string())?;
            line.push(b'\n');
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| e.to_string())?;
            f.write_all(&line).map_err(|e| e.to_string())?;
        }
        records.push(record);
        Ok(())
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap().clone()
    }
}
