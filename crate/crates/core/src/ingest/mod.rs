//! Source acquisition: fetch, clean, segment, chunk.

pub mod chunk;
pub mod html;
pub mod segment;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use chunk::{chunk_document, estimate_tokens, Chunk, ChunkError, DEFAULT_CHUNK_BUDGET};
pub use segment::segment_sentences;

use crate::par;

/// Default number of concurrent fetches.
pub const DEFAULT_FETCH_PARALLELISM: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source_uri: String,
    pub title: String,
    pub body: String,
    /// Kept out of serialized artifacts so replayed runs stay byte-identical.
    #[serde(skip)]
    pub fetched_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("transport error fetching {uri}: {message}")]
    TransportError { uri: String, message: String },
    #[error("{uri} is not text content ({detail})")]
    NonTextContent { uri: String, detail: String },
    #[error("timed out fetching {0}")]
    Timeout(String),
    #[error("{0} has no text left after cleaning")]
    EmptyAfterCleaning(String),
    #[error("unsupported uri `{0}`: expected http, https or file")]
    UnsupportedUri(String),
    #[error("malformed manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
    #[error("duplicate document id `{0}`")]
    DuplicateDocumentId(String),
    #[error("cannot read corpus at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// Accepts `http(s)://`, `file://` and bare filesystem paths.
pub fn parse_uri(uri: &str) -> Result<Url, IngestError> {
    match Url::parse(uri) {
        Ok(u) if matches!(u.scheme(), "http" | "https" | "file") => Ok(u),
        Ok(u) if u.scheme().len() > 1 => Err(IngestError::UnsupportedUri(uri.to_string())),
        // no scheme, or a windows drive letter
        _ => {
            let path = std::path::absolute(uri).map_err(|e| IngestError::Io {
                path: uri.into(),
                source: e,
            })?;
            Url::from_file_path(&path).map_err(|_| IngestError::UnsupportedUri(uri.to_string()))
        }
    }
}

fn default_id(url: &Url) -> String {
    let last = url
        .path_segments()
        .and_then(|mut s| s.rfind(|seg| !seg.is_empty()))
        .unwrap_or("document");
    Path::new(last)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| last.to_string())
}

/// Fetches one document and cleans it to plain text. The id is derived from
/// the last path segment.
pub fn fetch_document(uri: &str, timeout: Duration) -> Result<Document, IngestError> {
    let url = parse_uri(uri)?;
    fetch_entry(
        &SourceEntry {
            id: default_id(&url),
            uri: uri.to_string(),
            title: None,
        },
        timeout,
    )
}

/// Fetches the entry's uri and builds a [`Document`] with its id and title.
pub fn fetch_entry(entry: &SourceEntry, timeout: Duration) -> Result<Document, IngestError> {
    let url = parse_uri(&entry.uri)?;
    let (bytes, is_html) = match url.scheme() {
        "file" => read_file(&url)?,
        _ => read_http(&url, timeout)?,
    };
    let text = decode_text(&entry.uri, bytes)?;
    let is_html = is_html || html::looks_like_html(&text);
    let (body, found_title) = if is_html {
        (html::clean_html(&text), html::extract_title(&text))
    } else {
        (html::collapse_whitespace(&text), None)
    };
    if body.is_empty() {
        return Err(IngestError::EmptyAfterCleaning(entry.uri.clone()));
    }
    Ok(Document {
        id: entry.id.clone(),
        source_uri: url.to_string(),
        title: entry
            .title
            .clone()
            .or(found_title)
            .unwrap_or_else(|| entry.id.clone()),
        body,
        fetched_at: Some(Utc::now()),
    })
}

fn read_file(url: &Url) -> Result<(Vec<u8>, bool), IngestError> {
    let path = url
        .to_file_path()
        .map_err(|_| IngestError::UnsupportedUri(url.to_string()))?;
    let bytes = std::fs::read(&path).map_err(|e| IngestError::TransportError {
        uri: url.to_string(),
        message: e.to_string(),
    })?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    Ok((bytes, matches!(ext.as_str(), "html" | "htm" | "xhtml")))
}

fn read_http(url: &Url, timeout: Duration) -> Result<(Vec<u8>, bool), IngestError> {
    let agent = ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build(),
    );
    let map_err = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => IngestError::Timeout(url.to_string()),
        other => IngestError::TransportError {
            uri: url.to_string(),
            message: other.to_string(),
        },
    };
    let mut resp = agent.get(url.as_str()).call().map_err(map_err)?;
    if !resp.status().is_success() {
        return Err(IngestError::TransportError {
            uri: url.to_string(),
            message: format!("HTTP {}", resp.status()),
        });
    }
    let content_type = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("text/plain")
        .to_ascii_lowercase();
    let textual = content_type.starts_with("text/")
        || content_type.contains("html")
        || content_type.contains("xml")
        || content_type.contains("json");
    if !textual {
        return Err(IngestError::NonTextContent {
            uri: url.to_string(),
            detail: content_type,
        });
    }
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(32 * 1024 * 1024)
        .read_to_vec()
        .map_err(map_err)?;
    Ok((bytes, content_type.contains("html")))
}

fn decode_text(uri: &str, bytes: Vec<u8>) -> Result<String, IngestError> {
    if bytes.contains(&0) {
        return Err(IngestError::NonTextContent {
            uri: uri.to_string(),
            detail: "contains NUL bytes".into(),
        });
    }
    String::from_utf8(bytes).map_err(|_| IngestError::NonTextContent {
        uri: uri.to_string(),
        detail: "not valid UTF-8".into(),
    })
}

/// Reads a JSON-lines manifest. Relative file uris resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SourceEntry>, IngestError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: SourceEntry =
            serde_json::from_str(line).map_err(|e| IngestError::MalformedManifest {
                line: i + 1,
                message: e.to_string(),
            })?;
        if Url::parse(&entry.uri).is_err() && Path::new(&entry.uri).is_relative() {
            entry.uri = base.join(&entry.uri).to_string_lossy().into_owned();
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Lists a corpus: a `.jsonl` manifest, or a directory whose `.txt` and
/// `.html` files (sorted by name) form an implicit manifest.
pub fn corpus_entries(path: &Path) -> Result<Vec<SourceEntry>, IngestError> {
    let io_err = |e| IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| matches!(e.to_str(), Some("txt" | "html" | "htm")))
            })
            .collect();
        files.sort();
        Ok(files
            .into_iter()
            .map(|p| SourceEntry {
                id: p.file_stem().unwrap().to_string_lossy().into_owned(),
                uri: p.to_string_lossy().into_owned(),
                title: None,
            })
            .collect())
    } else {
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Result of loading a corpus. Documents that could not be admitted are
/// reported alongside the ones that were.
#[derive(Debug)]
pub struct CorpusLoad {
    pub documents: Vec<Document>,
    pub rejected: Vec<(String, IngestError)>,
}

/// Fetches every entry with bounded parallelism, keeping manifest order.
pub fn load_corpus(
    entries: &[SourceEntry],
    parallelism: usize,
    timeout: Duration,
) -> Result<CorpusLoad, IngestError> {
    let mut ids = BTreeSet::new();
    for e in entries {
        if !ids.insert(e.id.as_str()) {
            return Err(IngestError::DuplicateDocumentId(e.id.clone()));
        }
    }
    let fetched = par::map_ordered(entries, parallelism.max(1), |e| fetch_entry(e, timeout));
    let mut load = CorpusLoad {
        documents: Vec::new(),
        rejected: Vec::new(),
    };
    for (entry, res) in entries.iter().zip(fetched) {
        match res {
            Ok(doc) => load.documents.push(doc),
            Err(e) => load.rejected.push((entry.id.clone(), e)),
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body).unwrap();
        p
    }

    #[test]
    fn file_uri_article() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "tesla.html",
            b"<html><head><title>Tesla, Inc.</title></head><body><p>Tesla is an American EV maker.</p></body></html>",
        );
        let uri = Url::from_file_path(&p).unwrap().to_string();
        let doc = fetch_document(&uri, Duration::from_secs(1)).unwrap();
        assert_eq!(doc.id, "tesla");
        assert_eq!(doc.title, "Tesla, Inc.");
        assert_eq!(doc.body, "Tesla is an American EV maker.");
        assert!(doc.fetched_at.is_some());
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "empty.txt", b"");
        let err = fetch_document(p.to_str().unwrap(), Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, IngestError::EmptyAfterCleaning(_)));
    }

    #[test]
    fn script_only_page_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.html",
            b"<html><body><script>var supplier = 'CATL';</script></body></html>",
        );
        let err = fetch_document(p.to_str().unwrap(), Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, IngestError::EmptyAfterCleaning(_)));
    }

    #[test]
    fn binary_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.txt", &[0x89, b'P', b'N', b'G', 0, 1, 2]);
        let err = fetch_document(p.to_str().unwrap(), Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, IngestError::NonTextContent { .. }));
    }

    #[test]
    fn unsupported_scheme() {
        assert!(matches!(
            fetch_document("ftp://example.com/a.txt", Duration::from_secs(1)),
            Err(IngestError::UnsupportedUri(_))
        ));
    }

    #[test]
    fn directory_is_implicit_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.txt", b"Second doc.");
        write(dir.path(), "a.html", b"<p>First doc.</p>");
        write(dir.path(), "notes.md", b"ignored");
        let entries = corpus_entries(dir.path()).unwrap();
        let ids: Vec<_> = entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        let load = load_corpus(&entries, 4, Duration::from_secs(1)).unwrap();
        assert_eq!(load.documents.len(), 2);
        assert_eq!(load.documents[0].body, "First doc.");
    }

    #[test]
    fn manifest_with_relative_paths_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "x.txt", b"CATL supplies Tesla.");
        let m = write(
            dir.path(),
            "m.jsonl",
            b"{\"id\":\"catl\",\"uri\":\"x.txt\",\"title\":\"CATL\"}\n\n{\"id\":\"gone\",\"uri\":\"missing.txt\"}\n",
        );
        let entries = corpus_entries(&m).unwrap();
        let load = load_corpus(&entries, 2, Duration::from_secs(1)).unwrap();
        assert_eq!(load.documents.len(), 1);
        assert_eq!(load.documents[0].title, "CATL");
        assert_eq!(load.rejected.len(), 1);
        assert_eq!(load.rejected[0].0, "gone");

        let dup = vec![entries[0].clone(), entries[0].clone()];
        assert!(matches!(
            load_corpus(&dup, 1, Duration::from_secs(1)),
            Err(IngestError::DuplicateDocumentId(_))
        ));
        assert!(matches!(
            parse_manifest("{not json", dir.path()),
            Err(IngestError::MalformedManifest { line: 1, .. })
        ));
    }

    #[test]
    fn http_fetch_against_local_server() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            for body_kind in ["html", "png"] {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = [0u8; 2048];
                let _ = s.read(&mut buf);
                let (ct, body) = if body_kind == "html" {
                    ("text/html; charset=utf-8", "<html><body><p>Albemarle produces lithium.</p></body></html>")
                } else {
                    ("image/png", "xx")
                };
                write!(
                    s,
                    "HTTP/1.1 200 OK\r\nContent-Type: {ct}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        let doc = fetch_document(&format!("http://{addr}/wiki/Albemarle"), Duration::from_secs(5)).unwrap();
        assert_eq!(doc.id, "Albemarle");
        assert_eq!(doc.body, "Albemarle produces lithium.");
        let err = fetch_document(&format!("http://{addr}/logo.png"), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, IngestError::NonTextContent { .. }));
        server.join().unwrap();
    }

    #[test]
    fn http_timeout() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hold = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(600));
            drop(s);
        });
        let err = fetch_document(&format!("http://{addr}/slow"), Duration::from_millis(150)).unwrap_err();
        assert!(matches!(err, IngestError::Timeout(_)), "{err:?}");
        hold.join().unwrap();
    }
}
