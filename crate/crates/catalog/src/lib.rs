//! Manifest-driven product acquisition with a checksum-verified local cache.
//!
//! A manifest lists products (id, sensor, tile, date, source URL, SHA-256).
//! [`fetch`] brings a store directory up to date with it, downloading only
//! what is missing or corrupt, and [`verify_store`] audits a store without
//! touching it. Products live under `<store>/products/`.
//!
//! ```no_run
//! use greenzonal_catalog::{fetch, load_manifest, FetchOptions};
//!
//! let manifest = load_manifest(std::fs::read("manifest.csv")?.as_slice())?;
//! let report = fetch(&manifest, "store".as_ref(), &FetchOptions::default());
//! println!("{} fetched, {} failed", report.fetched(), report.failed());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Environment variable holding the bearer token for protected URLs.
pub const TOKEN_ENV: &str = "GREENZONAL_TOKEN";

pub const MANIFEST_HEADER: [&str; 6] = ["product_id", "sensor", "tile_id", "date", "url", "sha256"];

/// Subdirectory of the store that holds product files.
pub const PRODUCTS_DIR: &str = "products";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest line {line}: {msg}")]
    Invalid { line: u64, msg: String },
    #[error("manifest header must start with {expected}, found {found}")]
    Header { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub product_id: String,
    pub sensor: String,
    pub tile_id: String,
    pub date: String,
    pub url: String,
    pub sha256: String,
    /// Local source file used instead of `url` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_path: Option<String>,
}

impl ManifestEntry {
    /// Store file name: the product id plus the source's extension, if any.
    pub fn file_name(&self) -> String {
        let source = self.local_path.as_deref().unwrap_or(&self.url);
        let last = source
            .split(['?', '#'])
            .next()
            .unwrap_or("")
            .rsplit('/')
            .next()
            .unwrap_or("");
        match last.rfind('.') {
            Some(i) if i > 0 && last.len() - i <= 8 => format!("{}{}", self.product_id, &last[i..]),
            _ => self.product_id.clone(),
        }
    }

    pub fn store_path(&self, store: &Path) -> PathBuf {
        store.join(PRODUCTS_DIR).join(self.file_name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ProductManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        let m = ProductManifest { entries };
        m.validate()?;
        Ok(m)
    }

    /// Unique, filesystem-safe ids and 64-hex-digit checksums.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            let line = i as u64 + 2;
            let bad = |msg: String| ManifestError::Invalid { line, msg };
            if e.product_id.is_empty()
                || !e.product_id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
                || e.product_id.starts_with('.')
            {
                return Err(bad(format!("product_id {:?} must be non-empty [A-Za-z0-9._-]", e.product_id)));
            }
            if !seen.insert(e.product_id.as_str()) {
                return Err(bad(format!("duplicate product_id {:?}", e.product_id)));
            }
            if e.sha256.len() != 64 || !e.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad(format!("sha256 {:?} is not 64 hex digits", e.sha256)));
            }
            if e.url.is_empty() && e.local_path.is_none() {
                return Err(bad("neither url nor local_path given".into()));
            }
        }
        Ok(())
    }
}

/// Parses the manifest CSV; an optional seventh column `local_path` is allowed.
pub fn load_manifest(text: &[u8]) -> Result<ProductManifest, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text);
    let headers = rdr.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found.len() < 6 || found[..6] != MANIFEST_HEADER || (found.len() == 7 && found[6] != "local_path") || found.len() > 7 {
        return Err(ManifestError::Header {
            expected: MANIFEST_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut entries = Vec::new();
    for rec in rdr.deserialize::<ManifestEntry>() {
        let mut e = rec?;
        e.sha256.make_ascii_lowercase();
        if e.local_path.as_deref() == Some("") {
            e.local_path = None;
        }
        entries.push(e);
    }
    ProductManifest::new(entries)
}

pub fn write_manifest(m: &ProductManifest) -> Result<String, ManifestError> {
    let with_local = m.entries.iter().any(|e| e.local_path.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = MANIFEST_HEADER.to_vec();
    if with_local {
        header.push("local_path");
    }
    w.write_record(&header)?;
    for e in &m.entries {
        let mut rec = vec![&e.product_id, &e.sensor, &e.tile_id, &e.date, &e.url, &e.sha256];
        let empty = String::new();
        if with_local {
            rec.push(e.local_path.as_ref().unwrap_or(&empty));
        }
        w.write_record(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| ManifestError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Lowercase hex SHA-256 of everything `r` yields.
pub fn sha256_reader(mut r: impl Read) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    sha256_reader(File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum FetchStatus {
    Cached,
    Fetched,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchOutcome {
    pub product_id: String,
    #[serde(flatten)]
    pub status: FetchStatus,
}

/// Per-entry outcomes in manifest order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    pub entries: Vec<FetchOutcome>,
}

impl FetchReport {
    fn count(&self, f: impl Fn(&FetchStatus) -> bool) -> usize {
        self.entries.iter().filter(|e| f(&e.status)).count()
    }

    pub fn cached(&self) -> usize {
        self.count(|s| *s == FetchStatus::Cached)
    }

    pub fn fetched(&self) -> usize {
        self.count(|s| *s == FetchStatus::Fetched)
    }

    pub fn failed(&self) -> usize {
        self.count(|s| matches!(s, FetchStatus::Failed(_)))
    }

    pub fn all_ok(&self) -> bool {
        self.failed() == 0
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub concurrency: usize,
    /// Bearer token; defaults to the value of [`TOKEN_ENV`].
    pub token: Option<String>,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            concurrency: 4,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Debug, Error)]
enum EntryError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("http status {0}")]
    Status(u16),
    #[error("http status {0}; the URL requires a token, set {TOKEN_ENV}")]
    Unauthorized(u16),
    #[error("network: {0}")]
    Network(String),
    #[error("unsupported url scheme in {0:?}")]
    Scheme(String),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    Checksum { expected: String, actual: String },
}

fn open_source(entry: &ManifestEntry, agent: &ureq::Agent, token: Option<&str>) -> Result<Box<dyn Read>, EntryError> {
    if let Some(p) = &entry.local_path {
        return Ok(Box::new(File::open(p)?));
    }
    let url = entry.url.as_str();
    if let Some(p) = url.strip_prefix("file://") {
        return Ok(Box::new(File::open(p)?));
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(EntryError::Scheme(url.to_string()));
    }
    let mut req = agent.get(url);
    if let Some(t) = token {
        req = req.header("Authorization", format!("Bearer {t}"));
    }
    match req.call() {
        Ok(resp) => Ok(Box::new(resp.into_body().into_reader())),
        Err(ureq::Error::StatusCode(s @ (401 | 403))) if token.is_none() => Err(EntryError::Unauthorized(s)),
        Err(ureq::Error::StatusCode(s)) => Err(EntryError::Status(s)),
        Err(e) => Err(EntryError::Network(e.to_string())),
    }
}

/// Streams the source into a temp file beside its destination, hashing as it
/// goes; only a verified file is renamed into place.
fn download(entry: &ManifestEntry, dest: &Path, agent: &ureq::Agent, token: Option<&str>) -> Result<(), EntryError> {
    let dir = dest.parent().expect("store path has a parent");
    let mut src = open_source(entry, agent, token)?;
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match src.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(EntryError::Network(e.to_string())),
        };
        h.update(&buf[..n]);
        tmp.write_all(&buf[..n])?;
    }
    let actual = hex::encode(h.finalize());
    if actual != entry.sha256 {
        // dropping `tmp` deletes it
        return Err(EntryError::Checksum {
            expected: entry.sha256.clone(),
            actual,
        });
    }
    tmp.as_file().sync_all()?;
    tmp.persist(dest).map_err(|e| e.error)?;
    Ok(())
}

fn fetch_one(entry: &ManifestEntry, store: &Path, agent: &ureq::Agent, token: Option<&str>) -> FetchStatus {
    let dest = entry.store_path(store);
    if dest.exists() {
        match sha256_file(&dest) {
            Ok(h) if h == entry.sha256 => return FetchStatus::Cached,
            Ok(_) => log::warn!("{}: cached copy is corrupt, fetching again", entry.product_id),
            Err(e) => log::warn!("{}: cannot read cached copy ({e}), fetching again", entry.product_id),
        }
    }
    match download(entry, &dest, agent, token) {
        Ok(()) => {
            log::info!("{}: fetched", entry.product_id);
            FetchStatus::Fetched
        }
        Err(e) => {
            if matches!(e, EntryError::Checksum { .. }) && dest.exists() {
                // a stale corrupt copy must not survive as if valid
                let _ = std::fs::remove_file(&dest);
            }
            log::warn!("{}: {e}", entry.product_id);
            FetchStatus::Failed(e.to_string())
        }
    }
}

/// Brings `store` up to date with `manifest`.
///
/// Entries are independent: a failure is recorded and the run continues.
/// Up to `opts.concurrency` entries are processed at once.
pub fn fetch(manifest: &ProductManifest, store: &Path, opts: &FetchOptions) -> FetchReport {
    let products = store.join(PRODUCTS_DIR);
    if let Err(e) = std::fs::create_dir_all(&products) {
        let reason = format!("cannot create {}: {e}", products.display());
        return FetchReport {
            entries: manifest
                .entries
                .iter()
                .map(|en| FetchOutcome {
                    product_id: en.product_id.clone(),
                    status: FetchStatus::Failed(reason.clone()),
                })
                .collect(),
        };
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .build()
        .into();
    let n = manifest.entries.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<FetchStatus>>> = Mutex::new(vec![None; n]);
    let workers = opts.concurrency.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let status = fetch_one(&manifest.entries[i], store, &agent, opts.token.as_deref());
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(status);
            });
        }
    });
    let slots = slots.into_inner().expect("workers joined");
    FetchReport {
        entries: manifest
            .entries
            .iter()
            .zip(slots)
            .map(|(e, s)| FetchOutcome {
                product_id: e.product_id.clone(),
                status: s.expect("every entry visited"),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreStatus {
    Ok,
    Missing,
    Corrupt,
}

/// Read-only audit of which manifest products are present and intact.
pub fn verify_store(manifest: &ProductManifest, store: &Path) -> Vec<(String, StoreStatus)> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let path = e.store_path(store);
            let status = if !path.is_file() {
                StoreStatus::Missing
            } else {
                match sha256_file(&path) {
                    Ok(h) if h == e.sha256 => StoreStatus::Ok,
                    _ => StoreStatus::Corrupt,
                }
            };
            (e.product_id.clone(), status)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY_SHA: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

    fn entry(id: &str, url: &str) -> ManifestEntry {
        ManifestEntry {
            product_id: id.into(),
            sensor: "SENTINEL2".into(),
            tile_id: "T35TMK".into(),
            date: "2021-07-15".into(),
            url: url.into(),
            sha256: EMPTY_SHA.into(),
            local_path: None,
        }
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_reader(&b""[..]).unwrap(), EMPTY_SHA);
    }

    #[test]
    fn parses_manifest_with_and_without_local_path() {
        let text = format!("product_id,sensor,tile_id,date,url,sha256\na,MODIS,h19v04,2021-07-12,https://x/a.tif,{}\n", EMPTY_SHA.to_uppercase());
        let m = load_manifest(text.as_bytes()).unwrap();
        assert_eq!(m.entries[0].sha256, EMPTY_SHA);
        assert_eq!(m.entries[0].local_path, None);
        assert_eq!(m.entries[0].file_name(), "a.tif");

        let text = format!("product_id,sensor,tile_id,date,url,sha256,local_path\nb,S2,T35TMK,2021-07-15,,{EMPTY_SHA},/data/b.jp2\n");
        let m = load_manifest(text.as_bytes()).unwrap();
        assert_eq!(m.entries[0].file_name(), "b.jp2");
        assert_eq!(load_manifest(write_manifest(&m).unwrap().as_bytes()).unwrap(), m);
    }

    #[test]
    fn rejects_duplicates_bad_hashes_and_headers() {
        let dup = ProductManifest::new(vec![entry("a", "https://x/a"), entry("a", "https://x/b")]);
        assert!(matches!(dup, Err(ManifestError::Invalid { line: 3, .. })));
        let mut e = entry("a", "https://x/a");
        e.sha256 = "abc".into();
        assert!(ProductManifest::new(vec![e]).is_err());
        assert!(ProductManifest::new(vec![entry("../a", "https://x/a")]).is_err());
        assert!(matches!(load_manifest(b"id,url\n"), Err(ManifestError::Header { .. })));
    }

    #[test]
    fn file_name_ignores_query_and_dotless_paths() {
        assert_eq!(entry("p", "https://h/d/x.hdf?sig=1").file_name(), "p.hdf");
        assert_eq!(entry("p", "https://h/download").file_name(), "p");
        assert_eq!(entry("p", "https://h/.hidden").file_name(), "p");
    }

    #[test]
    fn unsupported_scheme_fails_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProductManifest::new(vec![entry("a", "ftp://h/a")]).unwrap();
        let r = fetch(&m, dir.path(), &FetchOptions::default());
        assert!(matches!(&r.entries[0].status, FetchStatus::Failed(msg) if msg.contains("scheme")));
    }
}
