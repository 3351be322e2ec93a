mod common;

use common::{agent, canonical, get, put_json, seeded_store, Server};
use greenzonal_cli::store::{StoreLayout, ThresholdsDoc};
use greenzonal_core::ndvi;
use greenzonal_core::zonal::zonal_vegetation;
use serde_json::Value;

fn json(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(body)))
}

#[test]
fn stats_equal_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    seeded_store(dir.path());
    let store = StoreLayout::new(dir.path());
    let zones = store.load_zones().unwrap();
    let server = Server::start(dir.path());
    let a = agent();
    for raster_id in ["modis-ndvi", "romania-modis"] {
        let (_, grid) = store.raster(raster_id).unwrap();
        for z in &zones {
            for t in [0.5, 0.55, 0.6] {
                let url = format!("{}/api/zones/{}/stats?raster={raster_id}&threshold={t}", server.url, z.id);
                let (status, body) = get(&a, &url);
                match zonal_vegetation(&grid, z, t) {
                    Ok(r) => {
                        assert_eq!(status, 200, "{url}");
                        let want = serde_json::to_value(r.with_raster_id(raster_id)).unwrap();
                        assert_eq!(canonical(&json(&body)), canonical(&want), "{url}");
                    }
                    Err(_) => assert_eq!(status, 409, "{url}"),
                }
            }
        }
    }
    // without a threshold the MODIS default applies
    let (status, body) = get(&a, &format!("{}/api/zones/bucuresti/stats?raster=modis-ndvi", server.url));
    assert_eq!(status, 200);
    assert_eq!(json(&body)["threshold"], 0.58);
}

#[test]
fn sweep_listing_and_images() {
    let dir = tempfile::tempdir().unwrap();
    seeded_store(dir.path());
    let server = Server::start(dir.path());
    let a = agent();
    let (status, body) = get(&a, &format!("{}/api/zones", server.url));
    assert_eq!(status, 200);
    assert_eq!(json(&body).as_array().unwrap().len(), 41);
    let (_, body) = get(&a, &format!("{}/api/rasters", server.url));
    let rasters = json(&body);
    assert_eq!(rasters.as_array().unwrap().len(), 3);
    assert_eq!(rasters[0]["sensor"], "MODIS");

    let (status, body) = get(&a, &format!("{}/api/zones/bucuresti/sweep?raster=modis-ndvi", server.url));
    assert_eq!(status, 200);
    let v = json(&body);
    let store = StoreLayout::new(dir.path());
    let (_, grid) = store.raster("modis-ndvi").unwrap();
    let zone = store.load_zones().unwrap().into_iter().find(|z| z.id == "bucuresti").unwrap();
    let lib = ndvi::sweep(&grid, &zone, 0.5, 0.7, 0.05).unwrap();
    assert_eq!(canonical(&v["points"]), canonical(&serde_json::to_value(&lib.points).unwrap()));

    let mut resp = a
        .get(&format!("{}/api/rasters/modis-ndvi/mask.png?zone=bucuresti&threshold=0.5&window=10,10,20,30", server.url))
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert_eq!(resp.headers().get("content-type").unwrap(), "image/png");
    let png_bytes = resp.body_mut().read_to_vec().unwrap();
    let info = png::Decoder::new(std::io::Cursor::new(png_bytes)).read_info().unwrap().info().clone();
    assert_eq!((info.width, info.height), (20, 30));
    let (status, _) = get(&a, &format!("{}/api/rasters/s2-ndvi/preview.png", server.url));
    assert_eq!(status, 200);
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    seeded_store(dir.path());
    let server = Server::start(dir.path());
    let a = agent();
    let u = &server.url;
    let cases = [
        (format!("{u}/api/nowhere"), 404),
        (format!("{u}/api/zones/atlantis/stats?raster=modis-ndvi"), 404),
        (format!("{u}/api/zones/bucuresti/stats?raster=nope"), 404),
        (format!("{u}/api/zones/bucuresti/stats"), 400),
        (format!("{u}/api/zones/bucuresti/stats?raster=modis-ndvi&threshold=abc"), 400),
        (format!("{u}/api/zones/bucuresti/stats?raster=modis-ndvi&threshold=1.5"), 400),
        (format!("{u}/api/zones/cluj-napoca/stats?raster=modis-ndvi"), 409),
        (format!("{u}/api/zones/bucuresti/sweep?raster=modis-ndvi&from=0.7&to=0.5"), 400),
        (format!("{u}/api/rasters/modis-ndvi/mask.png?window=0,0,999,1"), 400),
    ];
    for (url, want) in cases {
        let (status, body) = get(&a, &url);
        assert_eq!(status, want, "{url}");
        assert!(json(&body)["error"].is_string(), "{url}");
    }
    let put = |zone: &str, body: &str| put_json(&a, &format!("{u}/api/thresholds/{zone}"), body).unwrap().0;
    assert_eq!(put("bucuresti", r#"{"sensor":"MODIS","threshold":0.53}"#), 400);
    assert_eq!(put("bucuresti", r#"{"sensor":"MODIS","threshold":1.05}"#), 400);
    assert_eq!(put("bucuresti", r#"{"sensor":"LANDSAT","threshold":0.5}"#), 400);
    assert_eq!(put("bucuresti", "not json"), 400);
    assert_eq!(put("atlantis", r#"{"sensor":"MODIS","threshold":0.5}"#), 404);
}

#[test]
fn saved_thresholds_persist_and_drive_stats() {
    let dir = tempfile::tempdir().unwrap();
    seeded_store(dir.path());
    let a = agent();
    {
        let server = Server::start(dir.path());
        let (status, body) = put_json(
            &a,
            &format!("{}/api/thresholds/cluj-napoca", server.url),
            r#"{"sensor":"MODIS","threshold":0.65}"#,
        )
        .unwrap();
        assert_eq!(status, 200);
        assert_eq!(json(&body)["threshold"], 0.65);
        // off-grid float noise snaps to the grid value
        let (status, body) = put_json(
            &a,
            &format!("{}/api/thresholds/bucuresti", server.url),
            r#"{"sensor":"MODIS","threshold":0.45000000000000007}"#,
        )
        .unwrap();
        assert_eq!(status, 200);
        assert_eq!(json(&body)["threshold"], 0.45);
        let (_, body) = get(&a, &format!("{}/api/zones/bucuresti/stats?raster=modis-ndvi", server.url));
        assert_eq!(json(&body)["threshold"], 0.45);
    }
    let on_disk = StoreLayout::new(dir.path()).load_thresholds().unwrap();
    let server = Server::start(dir.path());
    let (_, body) = get(&a, &format!("{}/api/thresholds", server.url));
    let served: ThresholdsDoc = serde_json::from_slice(&body).unwrap();
    assert_eq!(served, on_disk);
    let cluj = served.records.iter().find(|r| r.zone_id == "cluj-napoca").unwrap();
    assert_eq!(cluj.threshold, 0.65);
}

#[test]
fn thresholds_file_survives_kill_during_puts() {
    let dir = tempfile::tempdir().unwrap();
    seeded_store(dir.path());
    let store = StoreLayout::new(dir.path());
    let a = agent();
    for round in 0..3 {
        let mut server = Server::start(dir.path());
        let url = server.url.clone();
        let kill_after = 20 + 30 * round;
        let mut sent = 0;
        for i in 0..100 {
            if i == kill_after {
                server.kill();
            }
            let t = 0.3 + 0.05 * (i % 8) as f64;
            let body = format!(r#"{{"sensor":"MODIS","threshold":{t}}}"#);
            if put_json(&a, &format!("{url}/api/thresholds/bucuresti"), &body).is_ok() {
                sent += 1;
            }
        }
        assert!(sent >= kill_after, "round {round}: only {sent} PUTs answered");
        let bytes = std::fs::read(store.thresholds_path()).unwrap();
        let doc: ThresholdsDoc = serde_json::from_slice(&bytes)
            .unwrap_or_else(|e| panic!("round {round}: truncated thresholds.json ({e})"));
        assert_eq!(doc.records.len(), 1);
        assert!(greenzonal_cli::service::snap_to_grid(doc.records[0].threshold).is_some());
    }
}
