//! Subcommand definitions and their implementations.

use crate::error::{Classify, CmdResult, Failure};
use crate::service::{self, snap_to_grid, AppState};
use crate::store::{infer_sensor, load_thresholds_file, write_atomic, StoreLayout};
use clap::{Args, Parser, Subcommand, ValueEnum};
use greenzonal_catalog::{fetch, load_manifest, FetchOptions, FetchStatus};
use greenzonal_core::ndvi::{self, ScaleSpec};
use greenzonal_core::raster::{read_ascii_grid, read_geotiff, write_ascii_grid, write_geotiff, SampleType, TiffOptions};
use greenzonal_core::tables::{load_table2, load_table3, validate_paper_tables, TABLE2_CSV, TABLE3_CSV};
use greenzonal_core::vector::parse_zones;
use greenzonal_core::zonal::{
    rank_zones, read_results_csv, round_pct, write_results_csv, zonal_vegetation, RankKey, ResultRow, ThresholdTable,
    ZonalError,
};
use greenzonal_core::{RasterGrid, Sensor, Zone};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "greenzonal", version, about = "Urban green index from NDVI rasters and city zones")]
pub struct Cli {
    /// Store directory (rasters, zones, thresholds, results).
    #[arg(long, global = true, env = "GREENZONAL_STORE", default_value = "store")]
    pub store: PathBuf,
    /// Only print requested data and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add a raster or a zone GeoJSON to the store.
    Ingest(IngestArgs),
    /// Compute NDVI from red and near-infrared bands.
    Ndvi(NdviArgs),
    /// Per-pixel maximum of several NDVI rasters.
    Composite(CompositeArgs),
    /// Vegetation area and share per zone, as the results CSV.
    Zonal(ZonalArgs),
    /// Vegetation share of one zone across a range of thresholds.
    Sweep(SweepArgs),
    /// Order zones of a results CSV by vegetation share or area.
    Rank(RankArgs),
    /// NDVI histogram (50 bins over [-1, 1]) as JSON.
    Hist(HistArgs),
    /// Check the bundled per-city tables for internal consistency.
    ValidatePaper(ValidateArgs),
    /// Download manifest products into the store.
    Fetch(FetchArgs),
    /// Serve the calibration HTTP API over the store.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Auto,
    Ascii,
    Gtiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    None,
    /// int16 NDVI x 1e4, fill -3000, valid [-2000, 10000]
    Modis,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: Format,
    /// MODIS or SENTINEL2; inferred from pixel size when omitted.
    #[arg(long)]
    pub sensor: Option<Sensor>,
    /// Store id; defaults to the input file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, value_enum, default_value = "none")]
    pub scale: Scale,
}

#[derive(Debug, Args)]
pub struct NdviArgs {
    #[arg(long)]
    pub red: PathBuf,
    #[arg(long)]
    pub nir: PathBuf,
    /// Output raster; `.tif` writes float32 GeoTIFF, anything else ASCII grid.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZonalArgs {
    /// Raster file or store raster id.
    #[arg(long)]
    pub raster: String,
    /// Zone GeoJSON; defaults to the store's zones.
    #[arg(long)]
    pub zones: Option<PathBuf>,
    /// One threshold for every zone.
    #[arg(long, conflicts_with = "thresholds")]
    pub threshold: Option<f64>,
    /// thresholds.json with per-zone values; sensor defaults fill the gaps.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub sensor: Option<Sensor>,
    /// Accept thresholds off the 0.05 calibration grid.
    #[arg(long)]
    pub fine: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub raster: String,
    #[arg(long)]
    pub zones: Option<PathBuf>,
    #[arg(long)]
    pub zone: String,
    /// Defaults to the sensor's range: MODIS 0.5, SENTINEL2 0.3.
    #[arg(long)]
    pub from: Option<f64>,
    /// Defaults to the sensor's range: MODIS 0.7, SENTINEL2 0.6.
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long)]
    pub sensor: Option<Sensor>,
    /// `.json` writes JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub sensor: Sensor,
    #[arg(long, default_value = "pct")]
    pub by: RankKey,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[arg(long)]
    pub raster: String,
    /// Restrict to one zone's pixels.
    #[arg(long)]
    pub zone: Option<String>,
    #[arg(long)]
    pub zones: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Defaults to the bundled table.
    #[arg(long)]
    pub table2: Option<PathBuf>,
    /// Defaults to the bundled table.
    #[arg(long)]
    pub table3: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

struct Ctx {
    store: StoreLayout,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn read_file(path: &Path) -> CmdResult<Vec<u8>> {
    std::fs::read(path).user_err(format!("cannot read {}", path.display()))
}

fn is_tiff(bytes: &[u8]) -> bool {
    bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") || bytes.starts_with(b"II+\0") || bytes.starts_with(b"MM\0+")
}

pub fn read_raster_file(path: &Path, format: Format) -> CmdResult<RasterGrid> {
    let bytes = read_file(path)?;
    let tiff = match format {
        Format::Auto => is_tiff(&bytes),
        Format::Gtiff => true,
        Format::Ascii => false,
    };
    let parsed = if tiff { read_geotiff(&bytes) } else { read_ascii_grid(&bytes) };
    parsed.data_err(format!("cannot decode {}", path.display()))
}

/// Writes `grid` as float32 GeoTIFF for `.tif`/`.tiff`, ASCII grid otherwise.
pub fn write_raster_file(path: &Path, grid: &RasterGrid) -> CmdResult {
    let tiff = matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("tif" | "tiff")
    );
    let bytes = if tiff {
        let opts = TiffOptions {
            sample_type: Some(SampleType::Float32),
            ..TiffOptions::default()
        };
        write_geotiff(grid, &opts)
    } else {
        write_ascii_grid(grid)
    }
    .data_err(format!("cannot encode {}", path.display()))?;
    write_atomic(path, &bytes).user_err(format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CmdResult {
    match out {
        Some(p) => write_atomic(p, bytes).user_err(format!("cannot write {}", p.display())),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(bytes).and_then(|_| o.flush()).user_err("cannot write to stdout")
        }
    }
}

/// A raster named by path, or else by store id, with its recorded sensor.
fn load_raster_arg(ctx: &Ctx, arg: &str) -> CmdResult<(String, Option<Sensor>, RasterGrid)> {
    let path = Path::new(arg);
    if path.exists() {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((id, None, read_raster_file(path, Format::Auto)?));
    }
    let index = ctx.store.load_index().data_err("cannot read the store index")?;
    match index.get(arg) {
        Some(entry) => {
            let grid = ctx.store.load_raster(entry).data_err(format!("cannot load store raster {arg}"))?;
            Ok((arg.to_string(), entry.sensor, grid))
        }
        None => Err(Failure::user(format!(
            "{arg}: no such file, and no raster with that id in store {}",
            ctx.store.root.display()
        ))),
    }
}

/// NDVI operations need values in [-1, 1]; scaled integers are refused.
fn require_ndvi(id: &str, grid: &RasterGrid) -> CmdResult {
    if let Some(v) = grid.samples.iter().find(|&&v| !grid.is_nodata(v) && !(-1.0..=1.0).contains(&v)) {
        return Err(Failure::data(format!(
            "raster {id} holds {v}, outside NDVI's [-1, 1]; ingest scaled products with --scale modis"
        )));
    }
    Ok(())
}

fn load_zones_arg(ctx: &Ctx, arg: Option<&Path>) -> CmdResult<Vec<Zone>> {
    let zones = match arg {
        Some(p) => parse_zones(&read_file(p)?).data_err(format!("cannot parse zones {}", p.display()))?,
        None => ctx.store.load_zones().data_err("cannot read the store's zones")?,
    };
    if zones.is_empty() {
        return Err(Failure::user("no zones: pass --zones or ingest a GeoJSON into the store"));
    }
    Ok(zones)
}

fn check_threshold(t: f64, fine: bool) -> CmdResult<f64> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Failure::user(format!("threshold {t} outside [-1, 1]")));
    }
    if fine {
        return Ok(t);
    }
    snap_to_grid(t).ok_or_else(|| Failure::user(format!("threshold {t} is off the 0.05 grid; pass --fine to use it")))
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> CmdResult {
    let looks_geojson = matches!(
        a.input.extension().and_then(|e| e.to_str()),
        Some("geojson" | "json")
    );
    if a.format == Format::Auto && looks_geojson {
        let zones = parse_zones(&read_file(&a.input)?).data_err(format!("cannot parse zones {}", a.input.display()))?;
        ctx.store.put_zones(&zones).user_err("cannot write to the store")?;
        ctx.say(format!("ingested {} zones into {}", zones.len(), ctx.store.zones_path().display()));
        return Ok(());
    }
    let mut grid = read_raster_file(&a.input, a.format)?;
    if a.scale == Scale::Modis {
        grid = ndvi::apply_scale(&grid, &ScaleSpec::MODIS_NDVI).data_err("cannot apply the MODIS scale")?;
    }
    let sensor = a.sensor.unwrap_or_else(|| infer_sensor(&grid));
    let id = match &a.id {
        Some(id) => id.clone(),
        None => a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    if a.scale == Scale::None && grid.samples.iter().any(|&v| !grid.is_nodata(v) && v.abs() > 1.0) {
        log::warn!("{id}: values outside [-1, 1]; scaled NDVI products need --scale modis");
    }
    let entry = ctx.store.put_raster(&id, Some(sensor), &grid).user_err("cannot write to the store")?;
    ctx.say(format!(
        "ingested {} ({}x{}, {}, {} m) as {}",
        a.input.display(),
        entry.width,
        entry.height,
        sensor,
        entry.pixel_size,
        entry.id
    ));
    Ok(())
}

fn ndvi_cmd(ctx: &Ctx, a: &NdviArgs) -> CmdResult {
    let red = read_raster_file(&a.red, Format::Auto)?;
    let nir = read_raster_file(&a.nir, Format::Auto)?;
    let out = ndvi::ndvi(&red, &nir).data_err("cannot compute NDVI")?;
    write_raster_file(&a.out, &out)?;
    ctx.say(format!("wrote {}", a.out.display()));
    Ok(())
}

fn composite(ctx: &Ctx, a: &CompositeArgs) -> CmdResult {
    let grids = a
        .inputs
        .iter()
        .map(|p| read_raster_file(Path::new(p.trim()), Format::Auto))
        .collect::<CmdResult<Vec<_>>>()?;
    let out = ndvi::max_composite(&grids).data_err("cannot composite")?;
    write_raster_file(&a.out, &out)?;
    ctx.say(format!("wrote {} from {} inputs", a.out.display(), grids.len()));
    Ok(())
}

fn zonal(ctx: &Ctx, a: &ZonalArgs) -> CmdResult {
    let (id, stored_sensor, grid) = load_raster_arg(ctx, &a.raster)?;
    require_ndvi(&id, &grid)?;
    let zones = load_zones_arg(ctx, a.zones.as_deref())?;
    let sensor = a.sensor.or(stored_sensor).unwrap_or_else(|| infer_sensor(&grid));
    let table = match (a.threshold, &a.thresholds) {
        (Some(t), _) => {
            let mut table = ThresholdTable::new();
            table.set_default(sensor, check_threshold(t, a.fine)?);
            table
        }
        (None, Some(p)) => {
            if !p.exists() {
                return Err(Failure::user(format!("{}: no such file", p.display())));
            }
            let doc = load_thresholds_file(p).data_err("cannot read thresholds")?;
            for r in &doc.records {
                check_threshold(r.threshold, a.fine)
                    .map_err(|e| Failure::data(format!("{}: {} {}: {e}", p.display(), r.zone_id, r.sensor)))?;
            }
            doc.to_table()
        }
        (None, None) => ThresholdTable::new(),
    };
    let mut rows = Vec::new();
    let mut skipped = 0;
    for z in &zones {
        match zonal_vegetation(&grid, z, table.resolve(&z.id, sensor)) {
            Ok(r) => rows.push(ResultRow::from_result(&r, &z.name, sensor)),
            Err(e @ (ZonalError::ZoneOutside(_) | ZonalError::NoPixels(_))) => {
                log::debug!("{e}");
                skipped += 1;
            }
            Err(e) => return Err(Failure::data(e)),
        }
    }
    if rows.is_empty() {
        return Err(Failure::data(format!("none of the {} zones covers a pixel of {id}", zones.len())));
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} zones cover no pixel of {id} and were skipped", zones.len());
    }
    emit(a.out.as_deref(), write_results_csv(&rows).as_bytes())?;
    if let Some(p) = &a.out {
        ctx.say(format!("wrote {} zones to {} ({skipped} skipped)", rows.len(), p.display()));
    }
    Ok(())
}

fn find_zone<'a>(zones: &'a [Zone], id: &str) -> CmdResult<&'a Zone> {
    zones
        .iter()
        .find(|z| z.id == id)
        .ok_or_else(|| Failure::user(format!("no zone {id:?}")))
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> CmdResult {
    let (id, stored_sensor, grid) = load_raster_arg(ctx, &a.raster)?;
    require_ndvi(&id, &grid)?;
    let zones = load_zones_arg(ctx, a.zones.as_deref())?;
    let zone = find_zone(&zones, &a.zone)?;
    let sensor = a.sensor.or(stored_sensor).unwrap_or_else(|| infer_sensor(&grid));
    let (lo, hi) = sensor.sweep_range();
    let series = ndvi::sweep(&grid, zone, a.from.unwrap_or(lo), a.to.unwrap_or(hi), a.step).map_err(|e| match e {
        ZonalError::Ndvi(_) => Failure::user(e),
        _ => Failure::data(e),
    })?;
    let json = a.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    let text = if json {
        serde_json::to_string_pretty(&series).expect("plain data serializes") + "\n"
    } else {
        let mut s = String::from("threshold,veg_pct,veg_km2\n");
        for p in &series.points {
            s += &format!("{},{},{}\n", p.threshold, p.veg_pct, p.veg_km2);
        }
        s
    };
    emit(a.out.as_deref(), text.as_bytes())
}

fn rank(a: &RankArgs) -> CmdResult {
    let rows = read_results_csv(&read_file(&a.results)?).data_err(format!("cannot parse {}", a.results.display()))?;
    let ranked = rank_zones(&rows, a.sensor, a.by);
    if ranked.is_empty() {
        return Err(Failure::data(format!("{} has no {} rows", a.results.display(), a.sensor)));
    }
    let mut s = String::from("rank,zone_id,name,sensor,veg_pct,veg_km2\n");
    for (i, r) in ranked.iter().enumerate() {
        s += &format!(
            "{},{},{},{},{},{:.2}\n",
            i + 1,
            r.zone_id,
            csv_field(&r.name),
            r.sensor,
            round_pct(r.veg_pct),
            r.veg_km2
        );
    }
    emit(a.out.as_deref(), s.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct HistOutput<'a> {
    raster: &'a str,
    zone: Option<&'a str>,
    bin_edges: &'a [f64],
    counts: &'a [u64],
    excluded: u64,
    mode_bin_center: Option<f64>,
}

fn hist(ctx: &Ctx, a: &HistArgs) -> CmdResult {
    let (id, _, grid) = load_raster_arg(ctx, &a.raster)?;
    require_ndvi(&id, &grid)?;
    let zones;
    let zone = match &a.zone {
        Some(zid) => {
            zones = load_zones_arg(ctx, a.zones.as_deref())?;
            Some(find_zone(&zones, zid)?)
        }
        None => None,
    };
    let h = ndvi::histogram(&grid, zone);
    let out = HistOutput {
        raster: &id,
        zone: zone.map(|z| z.id.as_str()),
        bin_edges: &h.bin_edges,
        counts: &h.counts,
        excluded: h.excluded,
        mode_bin_center: h.mode_bin().map(|i| h.bin_center(i)),
    };
    let text = serde_json::to_string_pretty(&out).expect("plain data serializes") + "\n";
    emit(a.out.as_deref(), text.as_bytes())
}

fn validate_paper(a: &ValidateArgs) -> CmdResult {
    let t2_text = match &a.table2 {
        Some(p) => read_file(p)?,
        None => TABLE2_CSV.as_bytes().to_vec(),
    };
    let t3_text = match &a.table3 {
        Some(p) => read_file(p)?,
        None => TABLE3_CSV.as_bytes().to_vec(),
    };
    let t2 = load_table2(&t2_text).data_err("cannot parse the thresholds table")?;
    let t3 = load_table3(&t3_text).data_err("cannot parse the surfaces table")?;
    let report = validate_paper_tables(&t2, &t3);
    let mut out = String::new();
    for m in &report.means {
        out += &format!(
            "{} threshold mean {:.4} (published {}), accepted [{}, {}]: {}\n",
            m.sensor,
            m.mean,
            m.published,
            m.range.0,
            m.range.1,
            if m.pass { "pass" } else { "FAIL" }
        );
    }
    for r in report.rows.iter().filter(|r| !r.pass) {
        out += &format!("FAIL {r:?}\n");
    }
    out += &format!(
        "{}/{} sensor rows within 1 pp; {}/{} cities pass\n",
        report.rows_passed(),
        report.rows.len(),
        report.cities_passed(),
        t3.len()
    );
    for g in &report.sensor_gaps {
        out += &format!(
            "note: {} differs by {} pp between sensors (MODIS {}%, SENTINEL2 {}%)\n",
            g.name,
            (g.modis_pct - g.sentinel2_pct).abs(),
            g.modis_pct,
            g.sentinel2_pct
        );
    }
    emit(None, out.as_bytes())?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::data("the per-city tables are inconsistent"))
    }
}

fn fetch_cmd(ctx: &Ctx, a: &FetchArgs) -> CmdResult {
    let manifest = load_manifest(&read_file(&a.manifest)?).data_err(format!("invalid manifest {}", a.manifest.display()))?;
    let opts = FetchOptions {
        concurrency: a.concurrency.max(1),
        ..FetchOptions::default()
    };
    let report = fetch(&manifest, &ctx.store.root, &opts);
    let mut out = String::new();
    for e in &report.entries {
        match &e.status {
            FetchStatus::Cached => out += &format!("{}\tcached\n", e.product_id),
            FetchStatus::Fetched => out += &format!("{}\tfetched\n", e.product_id),
            FetchStatus::Failed(why) => out += &format!("{}\tfailed: {why}\n", e.product_id),
        }
    }
    emit(None, out.as_bytes())?;
    ctx.say(format!(
        "{} cached, {} fetched, {} failed",
        report.cached(),
        report.fetched(),
        report.failed()
    ));
    if report.all_ok() {
        Ok(())
    } else {
        Err(Failure::data(format!("{} of {} products failed", report.failed(), report.entries.len())))
    }
}

fn serve(ctx: &Ctx, a: &ServeArgs) -> CmdResult {
    let state = AppState::load(ctx.store.clone()).map_err(|e| Failure::Data(e.context("cannot load the store")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .data_err("cannot start the runtime")?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    rt.block_on(service::serve(state, addr, ctx.quiet))
        .data_err(format!("cannot serve on {addr}"))
}

pub fn dispatch(cli: Cli) -> CmdResult {
    let ctx = Ctx {
        store: StoreLayout::new(&cli.store),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Ndvi(a) => ndvi_cmd(&ctx, a),
        Command::Composite(a) => composite(&ctx, a),
        Command::Zonal(a) => zonal(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Rank(a) => rank(a),
        Command::Hist(a) => hist(&ctx, a),
        Command::ValidatePaper(a) => validate_paper(a),
        Command::Fetch(a) => fetch_cmd(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
    }
}
