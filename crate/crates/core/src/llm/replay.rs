use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::Utc;

use super::{request_hash, Completion, LlmError, LlmExchange, LlmRequest, LlmResponse};

/// Keyed lookup of recorded exchanges.
#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    entries: HashMap<String, LlmExchange>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a JSON-lines store. Later lines replace earlier ones with the
    /// same hash; every stored hash is recomputed and checked.
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut store = ReplayStore::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ex: LlmExchange = serde_json::from_str(line)
                .map_err(|e| LlmError::StorageError(format!("line {}: {e}", n + 1)))?;
            let actual = request_hash(&ex.request);
            if actual != ex.request_hash {
                return Err(LlmError::StorageError(format!(
                    "line {}: stored hash {} does not match request ({actual})",
                    n + 1,
                    ex.request_hash
                )));
            }
            store.insert(ex);
        }
        Ok(store)
    }

    /// Loads a store file. A missing file is an error.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::StorageError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Path of a named run inside a namespace directory.
    pub fn namespace_path(dir: &Path, namespace: &str) -> PathBuf {
        dir.join(format!("{namespace}.jsonl"))
    }

    pub fn load_namespace(dir: &Path, namespace: &str) -> Result<Self, LlmError> {
        Self::load(&Self::namespace_path(dir, namespace))
    }

    pub fn insert(&mut self, ex: LlmExchange) {
        self.entries.insert(ex.request_hash.clone(), ex);
    }

    pub fn get(&self, digest: &str) -> Option<&LlmExchange> {
        self.entries.get(digest)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored digests in sorted order.
    pub fn digests(&self) -> Vec<&str> {
        let mut d: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        d.sort_unstable();
        d
    }
}

impl Completion for ReplayStore {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.validate()?;
        let digest = request_hash(req);
        match self.entries.get(&digest) {
            Some(ex) => Ok(ex.response.clone()),
            None => Err(LlmError::FixtureMiss {
                digest,
                preview: req.user_preview(),
            }),
        }
    }
}

static APPEND_LOCK: Mutex<()> = Mutex::new(());

/// Appends one exchange to the store at `path`, creating it if needed.
pub fn record(req: &LlmRequest, resp: &LlmResponse, path: &Path) -> Result<LlmExchange, LlmError> {
    let ex = LlmExchange {
        request_hash: request_hash(req),
        request: req.clone(),
        response: resp.clone(),
        recorded_at: Utc::now(),
    };
    let mut line = serde_json::to_string(&ex).map_err(|e| LlmError::StorageError(e.to_string()))?;
    line.push('\n');
    let storage = |e: std::io::Error| LlmError::StorageError(format!("{}: {e}", path.display()));
    let _guard = APPEND_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(storage)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(storage)?;
    file.write_all(line.as_bytes()).map_err(storage)?;
    Ok(ex)
}

/// Passes requests to an inner backend and appends every successful
/// exchange to a store file.
pub struct Recorder<C> {
    inner: C,
    path: PathBuf,
}

impl<C: Completion> Recorder<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Self {
        Recorder { inner, path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<C: Completion> Completion for Recorder<C> {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let resp = self.inner.complete(req)?;
        record(req, &resp, &self.path)?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::tests::sample;
    use crate::llm::FnCompletion;

    fn with_user(user: &str) -> LlmRequest {
        LlmRequest { user: user.into(), ..sample() }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let resp = LlmResponse::normal("{\"nodes\":[],\"relationships\":[]}");
        record(&sample(), &resp, &path).unwrap();
        let store = ReplayStore::load(&path).unwrap();
        assert_eq!(store.complete(&sample()).unwrap(), resp);
    }

    #[test]
    fn empty_store_misses() {
        let store = ReplayStore::new();
        match store.complete(&sample()) {
            Err(LlmError::FixtureMiss { digest, preview }) => {
                assert_eq!(digest, request_hash(&sample()));
                assert_eq!(preview, sample().user);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn miss_preview_is_80_chars() {
        let long = "x".repeat(200);
        let err = ReplayStore::new().complete(&with_user(&long)).unwrap_err();
        match err {
            LlmError::FixtureMiss { preview, .. } => assert_eq!(preview.chars().count(), 80),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        record(&sample(), &LlmResponse::normal("first"), &path).unwrap();
        record(&sample(), &LlmResponse::normal("second"), &path).unwrap();
        let store = ReplayStore::load(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.complete(&sample()).unwrap().content, "second");
    }

    #[test]
    fn three_distinct_exchanges() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/store.jsonl");
        let reqs: Vec<LlmRequest> = ["a", "b", "c"].iter().map(|u| with_user(u)).collect();
        for r in &reqs {
            record(r, &LlmResponse::normal(r.user.clone()), &path).unwrap();
        }
        let store = ReplayStore::load(&path).unwrap();
        let mut expected: Vec<String> = reqs.iter().map(request_hash).collect();
        expected.sort();
        assert_eq!(store.digests(), expected.iter().map(String::as_str).collect::<Vec<_>>());
        for r in &reqs {
            assert_eq!(store.complete(r).unwrap().content, r.user);
        }
    }

    #[test]
    fn tampered_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        record(&sample(), &LlmResponse::normal("ok"), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("helpful", "harmful");
        assert!(matches!(ReplayStore::parse(&text), Err(LlmError::StorageError(_))));
        assert!(matches!(ReplayStore::parse("not json\n"), Err(LlmError::StorageError(_))));
    }

    #[test]
    fn recorder_round_trip_and_concurrency() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let rec = Recorder::new(
            FnCompletion(|r: &LlmRequest| Ok(LlmResponse::normal(r.user.to_uppercase()))),
            &path,
        );
        let reqs: Vec<LlmRequest> = (0..32).map(|i| with_user(&format!("req {i}"))).collect();
        std::thread::scope(|s| {
            for chunk in reqs.chunks(8) {
                let rec = &rec;
                s.spawn(move || {
                    for r in chunk {
                        rec.complete(r).unwrap();
                    }
                });
            }
        });
        let store = ReplayStore::load(&path).unwrap();
        assert_eq!(store.len(), 32);
        // replay is order independent
        for r in reqs.iter().rev() {
            assert_eq!(store.complete(r).unwrap().content, r.user.to_uppercase());
        }
    }

    #[test]
    fn namespaces_are_separate_files() {
        let dir = tempfile::tempdir().unwrap();
        record(&sample(), &LlmResponse::normal("one"), &ReplayStore::namespace_path(dir.path(), "run-1")).unwrap();
        record(&sample(), &LlmResponse::normal("two"), &ReplayStore::namespace_path(dir.path(), "run-2")).unwrap();
        let a = ReplayStore::load_namespace(dir.path(), "run-1").unwrap();
        let b = ReplayStore::load_namespace(dir.path(), "run-2").unwrap();
        assert_eq!(a.complete(&sample()).unwrap().content, "one");
        assert_eq!(b.complete(&sample()).unwrap().content, "two");
    }
}
