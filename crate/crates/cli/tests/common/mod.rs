#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

pub const BIN: &str = env!("CARGO_BIN_EXE_greenzonal");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Runs the binary against `store` and returns its output.
pub fn run(store: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("GREENZONAL_STORE")
        .output()
        .expect("binary runs")
}

pub fn run_ok(store: &Path, args: &[&str]) -> String {
    let out = run(store, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// A store holding the Bucharest MODIS window, the national mosaic, an
/// NDVI grid computed from the Sentinel-2 pair, and the 41 zones.
pub fn seeded_store(root: &Path) {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    run_ok(root, &["ingest", "--input", &s(fixture("zones41.geojson"))]);
    run_ok(
        root,
        &[
            "ingest",
            "--input",
            &s(fixture("bucharest_modis_ndvi.tif")),
            "--scale",
            "modis",
            "--id",
            "modis-ndvi",
        ],
    );
    run_ok(
        root,
        &[
            "ingest",
            "--input",
            &s(fixture("romania_modis_1km_ndvi.tif")),
            "--scale",
            "modis",
            "--id",
            "romania-modis",
        ],
    );
    let s2 = root.join("s2_ndvi.asc");
    run_ok(
        root,
        &[
            "ndvi",
            "--red",
            &s(fixture("bucharest_s2_red.tif")),
            "--nir",
            &s(fixture("bucharest_s2_nir.tif")),
            "--out",
            &s(s2.clone()),
        ],
    );
    run_ok(root, &["ingest", "--input", &s(s2), "--id", "s2-ndvi", "--sensor", "SENTINEL2"]);
}

/// `greenzonal serve --port 0` on a store, killed on drop.
pub struct Server {
    pub child: Child,
    pub url: String,
}

impl Server {
    pub fn start(store: &Path) -> Server {
        let mut child = Command::new(BIN)
            .arg("--store")
            .arg(store)
            .args(["serve", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("server spawns");
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped stdout"))
            .read_line(&mut line)
            .expect("server announces its address");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_string();
        Server { child, url }
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.kill();
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(20)))
        .build()
        .into()
}

/// Status and body of a GET.
pub fn get(agent: &ureq::Agent, url: &str) -> (u16, Vec<u8>) {
    let mut resp = agent.get(url).call().expect("request completes");
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_vec().expect("body reads");
    (status, body)
}

pub fn put_json(agent: &ureq::Agent, url: &str, body: &str) -> Result<(u16, Vec<u8>), ureq::Error> {
    let mut resp = agent.put(url).header("content-type", "application/json").send(body)?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_vec()?;
    Ok((status, body))
}

/// Serialized with sorted keys, so equal values give equal bytes.
pub fn canonical(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("value serializes")
}
