use greenzonal_catalog::{
    fetch, load_manifest, sha256_reader, verify_store, FetchOptions, FetchStatus, ManifestEntry, ProductManifest,
    StoreStatus,
};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Minimal HTTP/1.1 file server on 127.0.0.1. Paths under `/secure/`
/// demand `Authorization: Bearer secret`.
struct Server {
    base: String,
    hits: Arc<AtomicUsize>,
}

fn serve(files: HashMap<String, Vec<u8>>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            reader.read_line(&mut request).unwrap();
            let path = request.split_whitespace().nth(1).unwrap_or("/").to_string();
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("authorization") {
                        auth = Some(v.trim().to_string());
                    }
                }
            }
            let (status, body) = if path.starts_with("/secure/") && auth.as_deref() != Some("Bearer secret") {
                ("401 Unauthorized", Vec::new())
            } else {
                match files.get(&path) {
                    Some(b) => ("200 OK", b.clone()),
                    None => ("404 Not Found", Vec::new()),
                }
            };
            let head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(&body);
        }
    });
    Server { base, hits }
}

fn sha(b: &[u8]) -> String {
    sha256_reader(b).unwrap()
}

fn entry(id: &str, url: String, sha256: String) -> ManifestEntry {
    ManifestEntry {
        product_id: id.into(),
        sensor: "SENTINEL2".into(),
        tile_id: "T35TMK".into(),
        date: "2021-07-15".into(),
        url,
        sha256,
        local_path: None,
    }
}

fn opts() -> FetchOptions {
    FetchOptions {
        concurrency: 4,
        token: None,
        timeout: Duration::from_secs(10),
    }
}

fn products(store: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(store.join("products"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn three_entry_setup() -> (Server, ProductManifest, HashMap<String, Vec<u8>>) {
    let files: HashMap<String, Vec<u8>> = [
        ("/b04.tif", vec![4u8; 70_000]),
        ("/b08.tif", (0..100_000u32).map(|i| (i % 251) as u8).collect()),
        ("/mod13.tif", b"not what the manifest promised".to_vec()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let server = serve(files.clone());
    let m = ProductManifest::new(vec![
        entry("s2-red", format!("{}/b04.tif", server.base), sha(&files["/b04.tif"])),
        entry("s2-nir", format!("{}/b08.tif", server.base), sha(&files["/b08.tif"])),
        entry("modis", format!("{}/mod13.tif", server.base), sha(b"the real bytes")),
    ])
    .unwrap();
    (server, m, files)
}

#[test]
fn one_bad_checksum_gives_two_fetched_one_failed() {
    let (_server, m, files) = three_entry_setup();
    let store = tempfile::tempdir().unwrap();
    let r = fetch(&m, store.path(), &opts());
    assert_eq!((r.fetched(), r.failed(), r.cached()), (2, 1, 0));
    assert_eq!(r.entries.iter().map(|e| e.product_id.as_str()).collect::<Vec<_>>(), ["s2-red", "s2-nir", "modis"]);
    assert!(matches!(&r.entries[2].status, FetchStatus::Failed(msg) if msg.contains("checksum mismatch")));
    // no partial or rejected file is left behind
    assert_eq!(products(store.path()), ["s2-nir.tif", "s2-red.tif"]);
    assert_eq!(std::fs::read(store.path().join("products/s2-red.tif")).unwrap(), files["/b04.tif"]);
    let audit = verify_store(&m, store.path());
    assert_eq!(
        audit.iter().map(|a| a.1).collect::<Vec<_>>(),
        [StoreStatus::Ok, StoreStatus::Ok, StoreStatus::Missing]
    );
}

#[test]
fn second_run_over_complete_store_makes_no_requests_or_writes() {
    let (server, mut m, _) = three_entry_setup();
    m.entries.pop();
    let store = tempfile::tempdir().unwrap();
    assert_eq!(fetch(&m, store.path(), &opts()).fetched(), 2);
    let hits = server.hits.load(Ordering::SeqCst);
    let stamp = |p: &str| std::fs::metadata(store.path().join("products").join(p)).unwrap().modified().unwrap();
    let before = (stamp("s2-red.tif"), stamp("s2-nir.tif"));
    std::thread::sleep(Duration::from_millis(20));
    let r = fetch(&m, store.path(), &opts());
    assert_eq!(r.cached(), 2);
    assert_eq!(server.hits.load(Ordering::SeqCst), hits);
    assert_eq!((stamp("s2-red.tif"), stamp("s2-nir.tif")), before);
}

#[test]
fn corrupted_cache_is_refetched_and_audit_flags_tampering() {
    let (_server, mut m, _) = three_entry_setup();
    m.entries.pop();
    let store = tempfile::tempdir().unwrap();
    fetch(&m, store.path(), &opts());
    let path = store.path().join("products/s2-nir.tif");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[1234] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    let audit = verify_store(&m, store.path());
    assert_eq!(audit[1], ("s2-nir".to_string(), StoreStatus::Corrupt));
    assert_eq!(audit[0].1, StoreStatus::Ok);
    let r = fetch(&m, store.path(), &opts());
    assert_eq!(r.entries[1].status, FetchStatus::Fetched);
    assert_eq!(r.entries[0].status, FetchStatus::Cached);
    assert!(verify_store(&m, store.path()).iter().all(|a| a.1 == StoreStatus::Ok));
}

#[test]
fn empty_store_audits_as_missing() {
    let (_server, m, _) = three_entry_setup();
    let store = tempfile::tempdir().unwrap();
    assert!(verify_store(&m, store.path()).iter().all(|a| a.1 == StoreStatus::Missing));
    assert!(!store.path().join("products").exists());
}

#[test]
fn bearer_token_is_sent_and_missing_token_is_explained() {
    let body = b"protected product".to_vec();
    let server = serve([("/secure/p.tif".to_string(), body.clone())].into_iter().collect());
    let m = ProductManifest::new(vec![entry("p", format!("{}/secure/p.tif", server.base), sha(&body))]).unwrap();
    let store = tempfile::tempdir().unwrap();
    let r = fetch(&m, store.path(), &opts());
    assert!(matches!(&r.entries[0].status, FetchStatus::Failed(msg) if msg.contains("GREENZONAL_TOKEN")));
    let with_token = FetchOptions {
        token: Some("secret".into()),
        ..opts()
    };
    assert_eq!(fetch(&m, store.path(), &with_token).fetched(), 1);
}

#[test]
fn network_failure_does_not_stop_the_run() {
    let dead = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = dead.local_addr().unwrap();
    drop(dead);
    let local = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(local.path(), b"local bytes").unwrap();
    let text = format!(
        "product_id,sensor,tile_id,date,url,sha256,local_path\n\
         gone,MODIS,h19v04,2021-07-12,http://{addr}/x.tif,{},\n\
         here,MODIS,h19v04,2021-07-28,file://{},{},\n\
         side,MODIS,h19v04,2021-08-13,,{},{}\n",
        sha(b"x"),
        local.path().display(),
        sha(b"local bytes"),
        sha(b"local bytes"),
        local.path().display(),
    );
    let m = load_manifest(text.as_bytes()).unwrap();
    let store = tempfile::tempdir().unwrap();
    let r = fetch(&m, store.path(), &opts());
    assert!(matches!(r.entries[0].status, FetchStatus::Failed(_)));
    assert_eq!(r.entries[1].status, FetchStatus::Fetched);
    assert_eq!(r.entries[2].status, FetchStatus::Fetched);
}
