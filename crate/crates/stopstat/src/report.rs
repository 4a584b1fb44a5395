//! Pipeline orchestration and file export.
//!
//! [`run_pipeline`] drives the five analysis stages (cleanse, usage, nna,
//! kde, cluster) over a snapshot store and writes every result under one
//! output directory, returning a manifest of inputs, parameters, per-stage
//! outputs, and timings. A failed stage aborts the run with the stage name
//! attached to the error, and any files the stage already produced gain a
//! sibling `<file>.partial` marker.
//!
//! All analysis outputs are pure functions of (store contents, config), so
//! re-running with the same inputs reproduces them byte for byte; only the
//! manifest's timing fields vary between runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cleanse::{cleanse, cleanse_mask, default_edinburgh_zones, load_depot_zones, CleanseReport, DepotZone};
use crate::cluster::{
    cluster_stops, cluster_summary, ClusterModel, FeatureRow, KmeansConfig, StandardizedFeatures,
    StopClusterRow,
};
use crate::error::{Error, Result};
use crate::geo::{AreaMethod, ProjectedPoint, Projection};
use crate::ingest::{SnapshotStore, Stop, VehicleObservation};
use crate::kde::{bandwidth_sweep, estimate_density, DensityGrid, GridSpec, SweepSummary};
use crate::nna::{run_nna_on_stops, NnaConfig, NnaResult};
use crate::usage::{assign_with_max_distance, service_frequency_table, ServiceCount, StopUsage};

pub const DEFAULT_BANDWIDTH_M: f64 = 300.0;
pub const DEFAULT_K: usize = 4;

/// Full parameter set for one pipeline run. The manifest echoes it, which
/// is enough to reproduce the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// NDJSON snapshot store; its `.stops.json` sidecar supplies the stops.
    pub store_path: PathBuf,
    pub out_dir: PathBuf,
    /// GeoJSON depot zones; defaults to the built-in Edinburgh set.
    pub zones_path: Option<PathBuf>,
    pub area_method: AreaMethod,
    pub histogram_bins: usize,
    pub alpha: f64,
    pub bandwidth_m: f64,
    /// Extra bandwidths to sweep; empty for no sweep.
    pub sweep_m: Vec<f64>,
    pub grid_size: usize,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Skip observations farther than this from every stop.
    pub max_distance_m: Option<f64>,
}

impl PipelineConfig {
    pub fn new(store_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            store_path: store_path.into(),
            out_dir: out_dir.into(),
            zones_path: None,
            area_method: AreaMethod::ConvexHull,
            histogram_bins: 50,
            alpha: 0.01,
            bandwidth_m: DEFAULT_BANDWIDTH_M,
            sweep_m: Vec::new(),
            grid_size: crate::kde::DEFAULT_GRID_SIZE,
            k: DEFAULT_K,
            seed: 42,
            restarts: 20,
            max_distance_m: None,
        }
    }
}

/// One executed stage: what it wrote and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<PathBuf>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub store: PathBuf,
    pub stops: PathBuf,
    /// Absent when the built-in zone defaults were used.
    pub zones: Option<PathBuf>,
}

/// Record of a completed pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub inputs: ManifestInputs,
    pub parameters: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Domain(format!("could not encode {}: {e}", path.display())))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(mut writer: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write the usage table as `stop_id,vehicle_count`.
pub fn write_usage_csv(path: &Path, usage: &[StopUsage]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in usage {
        w.serialize(row)
            .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    }
    finish_csv(w, path)
}

/// Read a `stop_id,vehicle_count` table back.
pub fn read_usage_csv(path: &Path) -> Result<Vec<StopUsage>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Domain(format!("{}: {e}", path.display()))))
        .collect()
}

/// Write the service frequency table as `service_name,count`.
pub fn write_services_csv(path: &Path, services: &[ServiceCount]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in services {
        w.serialize(row)
            .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    }
    finish_csv(w, path)
}

/// Write the per-stop cluster table as `stop_id,lat,lon,count,cluster`.
pub fn write_clusters_csv(path: &Path, table: &[StopClusterRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["stop_id", "lat", "lon", "count", "cluster"])
        .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    for row in table {
        w.write_record([
            row.stop_id.as_str(),
            &row.latitude.to_string(),
            &row.longitude.to_string(),
            &row.vehicle_count.to_string(),
            &row.cluster.to_string(),
        ])
        .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    }
    finish_csv(w, path)
}

/// Write density rows as `cell_x_center,cell_y_center,density,intensity`.
pub fn write_kde_csv(path: &Path, grid: &DensityGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["cell_x_center", "cell_y_center", "density", "intensity"])
        .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    for iy in 0..grid.spec.ny {
        for ix in 0..grid.spec.nx {
            let (cx, cy) = grid.spec.cell_center(ix, iy);
            w.write_record([
                cx.to_string(),
                cy.to_string(),
                grid.value_at(ix, iy).to_string(),
                grid.intensity_at(ix, iy).to_string(),
            ])
            .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
        }
    }
    finish_csv(w, path)
}

/// Grid metadata written alongside the density CSV. The projection
/// reference ties grid coordinates back to latitude/longitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeSidecar {
    pub reference_latitude: f64,
    pub reference_longitude: f64,
    pub grid: GridSpec,
    pub bandwidth_m: f64,
    pub total_weight: f64,
    pub integral: f64,
    pub max_density: f64,
    pub argmax_cell: (usize, usize),
}

impl KdeSidecar {
    pub fn describe(projection: &Projection, grid: &DensityGrid) -> KdeSidecar {
        let (ix, iy, max_density) = grid.max_cell();
        KdeSidecar {
            reference_latitude: projection.reference_latitude,
            reference_longitude: projection.reference_longitude,
            grid: grid.spec,
            bandwidth_m: grid.bandwidth_x_m,
            total_weight: grid.total_weight,
            integral: grid.integral(),
            max_density,
            argmax_cell: (ix, iy),
        }
    }
}

/// Model JSON with centroids in both standardized and raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModelDocument {
    #[serde(flatten)]
    pub model: ClusterModel,
    /// Centroids mapped back through the standardization:
    /// (latitude, longitude, vehicle count).
    pub centroids_raw: Vec<FeatureRow>,
}

impl ClusterModelDocument {
    pub fn new(model: ClusterModel, features: &StandardizedFeatures) -> ClusterModelDocument {
        let centroids_raw = model
            .centroids
            .iter()
            .map(|c| features.destandardize(c))
            .collect();
        ClusterModelDocument {
            model,
            centroids_raw,
        }
    }
}

/// One GeoJSON Point feature per stop with usage and cluster properties;
/// coordinates are `[longitude, latitude]`. The three tables must describe
/// the same stop set.
pub fn emit_geojson(
    stops: &[Stop],
    usage: &[StopUsage],
    table: &[StopClusterRow],
) -> Result<serde_json::Value> {
    let counts: BTreeMap<&str, u64> = usage
        .iter()
        .map(|u| (u.stop_id.as_str(), u.vehicle_count))
        .collect();
    let clusters: BTreeMap<&str, usize> = table
        .iter()
        .map(|r| (r.stop_id.as_str(), r.cluster))
        .collect();
    if counts.len() != stops.len() || clusters.len() != stops.len() {
        return Err(Error::Consistency(format!(
            "stop_id mismatch: {} stops, {} usage rows, {} cluster rows",
            stops.len(),
            counts.len(),
            clusters.len()
        )));
    }
    let features = stops
        .iter()
        .map(|stop| {
            let id = stop.stop_id.as_str();
            let (Some(&count), Some(&cluster)) = (counts.get(id), clusters.get(id)) else {
                return Err(Error::Consistency(format!(
                    "stop_id mismatch: '{id}' missing from usage or cluster table"
                )));
            };
            Ok(json!({
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [stop.longitude, stop.latitude],
                },
                "properties": {
                    "stop_id": stop.stop_id,
                    "name": stop.name,
                    "vehicle_count": count,
                    "cluster": cluster,
                },
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

/// Load stops from either a store sidecar document or a bare JSON array.
pub fn read_stops_file(path: &Path) -> Result<Vec<Stop>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stops = match serde_json::from_str::<crate::ingest::StopsDocument>(&text) {
        Ok(doc) => doc.stops,
        Err(_) => serde_json::from_str::<Vec<Stop>>(&text).map_err(|e| Error::Parse {
            message: format!("{}: not a stops document or stop array: {e}", path.display()),
            offset: 0,
            line: e.line(),
            column: e.column(),
        })?,
    };
    for (i, stop) in stops.iter().enumerate() {
        stop.validate()
            .map_err(|e| Error::InvalidEntry {
                index: i,
                message: e.to_string(),
            })?;
    }
    Ok(stops)
}

/// Resolve the depot zone list: an explicit GeoJSON file, or the built-in
/// Edinburgh defaults.
pub fn resolve_zones(zones_path: Option<&Path>) -> Result<Vec<DepotZone>> {
    match zones_path {
        Some(path) => load_depot_zones(path),
        None => Ok(default_edinburgh_zones()),
    }
}

/// Run the standalone cleanse verb: read a store, drop filtered rows, and
/// write the survivors as store-compatible NDJSON, preserving each record's
/// batch metadata. Optionally writes the audit report as JSON.
pub fn run_clean(
    in_path: &Path,
    out_path: &Path,
    zones_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<CleanseReport> {
    let store = SnapshotStore::open(in_path)?;
    let records = store.read_all()?;
    let observations: Vec<VehicleObservation> =
        records.iter().map(|r| r.observation()).collect();
    let zones = resolve_zones(zones_path)?;
    let (mask, report) = cleanse_mask(&observations, &zones)?;

    let mut buffer = String::new();
    for (record, &keep) in records.iter().zip(&mask) {
        if keep {
            let line = serde_json::to_string(record)
                .map_err(|e| Error::Domain(format!("could not encode record: {e}")))?;
            buffer.push_str(&line);
            buffer.push('\n');
        }
    }
    fs::write(out_path, buffer).map_err(|e| Error::io(out_path, e))?;
    if let Some(path) = report_path {
        write_json(path, &report)?;
    }
    Ok(report)
}

struct StageRunner {
    manifest: RunManifest,
}

impl StageRunner {
    /// Run one stage: record its outputs and timing on success, or mark
    /// whatever it left behind with `.partial` files and tag the error with
    /// the stage name.
    fn run<T>(
        &mut self,
        name: &'static str,
        outputs: Vec<PathBuf>,
        body: impl FnOnce(&mut Vec<String>) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        match body(&mut self.manifest.warnings) {
            Ok(value) => {
                self.manifest.stages.push(StageRecord {
                    name: name.to_string(),
                    outputs,
                    duration_ms: start.elapsed().as_millis() as u64,
                });
                Ok(value)
            }
            Err(e) => {
                for path in &outputs {
                    if path.exists() {
                        let marker = marker_path(path);
                        let _ = fs::write(&marker, b"incomplete: stage failed\n");
                    }
                }
                Err(Error::stage(name, e))
            }
        }
    }
}

fn marker_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

fn validate_pipeline_config(config: &PipelineConfig) -> Result<()> {
    if !(config.bandwidth_m > 0.0) || config.sweep_m.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Config(format!(
            "bandwidths must be positive, got {} (sweep {:?})",
            config.bandwidth_m, config.sweep_m
        )));
    }
    if config.grid_size < 2 {
        return Err(Error::Config(format!(
            "grid size must be at least 2, got {}",
            config.grid_size
        )));
    }
    if config.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            config.alpha
        )));
    }
    Ok(())
}

/// Execute cleanse, usage, nna, kde, and cluster over the configured store,
/// writing all outputs plus `manifest.json` under `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    validate_pipeline_config(config)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let out = |name: &str| config.out_dir.join(name);
    let store = SnapshotStore::open(&config.store_path)?;

    let mut runner = StageRunner {
        manifest: RunManifest {
            inputs: ManifestInputs {
                store: config.store_path.clone(),
                stops: store.stops_path(),
                zones: config.zones_path.clone(),
            },
            parameters: config.clone(),
            stages: Vec::new(),
            warnings: Vec::new(),
        },
    };

    // Stage 1: cleanse.
    let cleanse_report_path = out("cleanse_report.json");
    let kept = runner.run("cleanse", vec![cleanse_report_path.clone()], |_| {
        let observations = store.read_observations()?;
        if observations.is_empty() {
            return Err(Error::Domain(format!(
                "no observations in snapshot store {}",
                config.store_path.display()
            )));
        }
        let zones = resolve_zones(config.zones_path.as_deref())?;
        let (kept, report) = cleanse(observations, &zones)?;
        if kept.is_empty() {
            return Err(Error::Domain(
                "cleansing removed every observation".into(),
            ));
        }
        write_json(&cleanse_report_path, &report)?;
        Ok(kept)
    })?;

    // Stage 2: usage.
    let usage_path = out("usage.csv");
    let services_path = out("services.csv");
    let (stops, usage) = runner.run(
        "usage",
        vec![usage_path.clone(), services_path.clone()],
        |warnings| {
            let stops = store.read_stops()?.stops;
            if stops.is_empty() {
                return Err(Error::Domain("stop list is empty".into()));
            }
            let outcome = assign_with_max_distance(&kept, &stops, config.max_distance_m)?;
            if outcome.skipped_beyond_max > 0 {
                warnings.push(format!(
                    "{} observations were farther than {:?} m from every stop",
                    outcome.skipped_beyond_max, config.max_distance_m
                ));
            }
            write_usage_csv(&usage_path, &outcome.usage)?;
            let services = service_frequency_table(&kept, usize::MAX);
            write_services_csv(&services_path, &services)?;
            Ok((stops, outcome.usage))
        },
    )?;

    // Stage 3: nearest-neighbour analysis.
    let nna_path = out("nna.json");
    let projection = runner.run("nna", vec![nna_path.clone()], |_| {
        let nna_config = NnaConfig {
            area_method: config.area_method,
            histogram_bins: config.histogram_bins,
            alpha: config.alpha,
        };
        let (result, projection) = run_nna_on_stops(&stops, &nna_config)?;
        write_json(&nna_path, &result)?;
        Ok(projection)
    })?;

    // Stage 4: usage-weighted density.
    let kde_csv_path = out("kde.csv");
    let kde_meta_path = out("kde.json");
    let mut kde_outputs = vec![kde_csv_path.clone(), kde_meta_path.clone()];
    let kde_sweep_path = out("kde_sweep.json");
    if !config.sweep_m.is_empty() {
        kde_outputs.push(kde_sweep_path.clone());
    }
    runner.run("kde", kde_outputs, |_| {
        let points = stops
            .iter()
            .map(|s| projection.project(s.latitude, s.longitude))
            .collect::<Result<Vec<ProjectedPoint>>>()?;
        let weights: Vec<f64> = usage.iter().map(|u| u.vehicle_count as f64).collect();
        let h_max = config
            .sweep_m
            .iter()
            .copied()
            .fold(config.bandwidth_m, f64::max);
        let spec = GridSpec::covering(
            &points,
            config.grid_size,
            config.grid_size,
            3.0 * h_max,
        )?;
        let grid = estimate_density(&points, &weights, &spec, config.bandwidth_m, config.bandwidth_m)?;
        write_kde_csv(&kde_csv_path, &grid)?;
        write_json(&kde_meta_path, &KdeSidecar::describe(&projection, &grid))?;
        if !config.sweep_m.is_empty() {
            let entries = bandwidth_sweep(&points, &weights, &spec, &config.sweep_m)?;
            let summaries: Vec<&SweepSummary> =
                entries.iter().map(|e| &e.summary).collect();
            write_json(&kde_sweep_path, &summaries)?;
        }
        Ok(())
    })?;

    // Stage 5: clustering.
    let clusters_path = out("clusters.csv");
    let model_path = out("cluster_model.json");
    let summary_path = out("cluster_summary.json");
    let geojson_path = out("stops.geojson");
    runner.run(
        "cluster",
        vec![
            clusters_path.clone(),
            model_path.clone(),
            summary_path.clone(),
            geojson_path.clone(),
        ],
        |_| {
            let kmeans_config = KmeansConfig {
                seed: config.seed,
                restarts: config.restarts,
                ..KmeansConfig::default()
            };
            let (model, table, features) =
                cluster_stops(&stops, &usage, config.k, &kmeans_config)?;
            write_clusters_csv(&clusters_path, &table)?;
            let summary = cluster_summary(&model, &table);
            write_json(&summary_path, &summary)?;
            let geojson = emit_geojson(&stops, &usage, &table)?;
            write_json(&geojson_path, &geojson)?;
            write_json(&model_path, &ClusterModelDocument::new(model, &features))?;
            Ok(())
        },
    )?;

    let manifest = runner.manifest;
    write_json(&out("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Standalone nna verb: stops file in, NnaResult JSON out.
pub fn run_nna_file(
    stops_path: &Path,
    out_path: &Path,
    nna_config: &NnaConfig,
) -> Result<NnaResult> {
    let stops = read_stops_file(stops_path)?;
    let (result, _) = run_nna_on_stops(&stops, nna_config)?;
    write_json(out_path, &result)?;
    Ok(result)
}

/// Standalone kde verb: stops + usage files in, density CSV and sidecar
/// out. With sweep bandwidths, also writes `<out>.sweep.json` summaries.
pub fn run_kde_files(
    stops_path: &Path,
    usage_path: &Path,
    out_path: &Path,
    bandwidth_m: f64,
    sweep_m: &[f64],
    grid_size: usize,
) -> Result<KdeSidecar> {
    let stops = read_stops_file(stops_path)?;
    let usage = read_usage_csv(usage_path)?;
    let counts: BTreeMap<&str, u64> = usage
        .iter()
        .map(|u| (u.stop_id.as_str(), u.vehicle_count))
        .collect();
    let projection = Projection::centered_on(stops.iter().map(|s| (s.latitude, s.longitude)))?;
    let mut points = Vec::with_capacity(stops.len());
    let mut weights = Vec::with_capacity(stops.len());
    for stop in &stops {
        let Some(&count) = counts.get(stop.stop_id.as_str()) else {
            return Err(Error::Consistency(format!(
                "usage table does not cover stop '{}'",
                stop.stop_id
            )));
        };
        points.push(projection.project(stop.latitude, stop.longitude)?);
        weights.push(count as f64);
    }
    let h_max = sweep_m.iter().copied().fold(bandwidth_m, f64::max);
    let spec = GridSpec::covering(&points, grid_size, grid_size, 3.0 * h_max)?;
    let grid = estimate_density(&points, &weights, &spec, bandwidth_m, bandwidth_m)?;
    write_kde_csv(out_path, &grid)?;
    let sidecar = KdeSidecar::describe(&projection, &grid);
    write_json(&sidecar_path(out_path), &sidecar)?;
    if !sweep_m.is_empty() {
        let entries = bandwidth_sweep(&points, &weights, &spec, sweep_m)?;
        let summaries: Vec<&SweepSummary> = entries.iter().map(|e| &e.summary).collect();
        write_json(&sweep_path(out_path), &summaries)?;
    }
    Ok(sidecar)
}

/// `x.csv` -> `x.json`.
pub fn sidecar_path(out_path: &Path) -> PathBuf {
    out_path.with_extension("json")
}

/// `x.csv` -> `x.sweep.json`.
pub fn sweep_path(out_path: &Path) -> PathBuf {
    let stem = out_path.file_stem().unwrap_or_default().to_os_string();
    let mut name = stem;
    name.push(".sweep.json");
    out_path.with_file_name(name)
}

/// Standalone cluster verb: stops + usage files in; writes the per-stop
/// CSV to `out_path` plus `<stem>.model.json` and `<stem>.summary.json`.
pub fn run_cluster_files(
    stops_path: &Path,
    usage_path: &Path,
    out_path: &Path,
    k: usize,
    kmeans_config: &KmeansConfig,
) -> Result<ClusterModel> {
    let stops = read_stops_file(stops_path)?;
    let usage = read_usage_csv(usage_path)?;
    let (model, table, features) = cluster_stops(&stops, &usage, k, kmeans_config)?;
    write_clusters_csv(out_path, &table)?;
    let stem = |suffix: &str| {
        let mut name = out_path.file_stem().unwrap_or_default().to_os_string();
        name.push(suffix);
        out_path.with_file_name(name)
    };
    write_json(&stem(".model.json"), &ClusterModelDocument::new(model.clone(), &features))?;
    write_json(&stem(".summary.json"), &cluster_summary(&model, &table))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthetic_city;
    use approx::assert_relative_eq;

    fn city_run(dir: &Path, seed: u64) -> (PipelineConfig, RunManifest) {
        let city = synthetic_city(7);
        let store_path = dir.join("snapshots.ndjson");
        city.write_store(&store_path).unwrap();
        let zones_path = dir.join("zones.geojson");
        city.write_zones_geojson(&zones_path).unwrap();
        let mut config = PipelineConfig::new(&store_path, dir.join("out"));
        config.zones_path = Some(zones_path);
        config.k = 3;
        config.seed = seed;
        let manifest = run_pipeline(&config).unwrap();
        (config, manifest)
    }

    #[test]
    fn fixture_manifest_lists_five_clean_stages() {
        let dir = tempfile::tempdir().unwrap();
        let (config, manifest) = city_run(dir.path(), 42);
        let names: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["cleanse", "usage", "nna", "kde", "cluster"]);
        assert!(manifest.warnings.is_empty(), "warnings: {:?}", manifest.warnings);
        // Every listed output exists; no partial markers anywhere.
        for stage in &manifest.stages {
            assert!(!stage.outputs.is_empty());
            for path in &stage.outputs {
                assert!(path.exists(), "{} missing", path.display());
                assert!(!marker_path(path).exists());
            }
        }
        assert!(config.out_dir.join("manifest.json").exists());
        let text = fs::read_to_string(config.out_dir.join("manifest.json")).unwrap();
        let parsed: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.parameters, config);
    }

    #[test]
    fn empty_store_aborts_at_cleanse() {
        let dir = tempfile::tempdir().unwrap();
        let store_path = dir.path().join("empty.ndjson");
        SnapshotStore::open(&store_path).unwrap();
        let config = PipelineConfig::new(&store_path, dir.path().join("out"));
        let err = run_pipeline(&config).unwrap_err();
        match err {
            Error::Stage { stage, source } => {
                assert_eq!(stage, "cleanse");
                assert!(source.to_string().contains("no observations"), "{source}");
            }
            other => panic!("expected a stage error, got {other:?}"),
        }
    }

    #[test]
    fn failed_stage_marks_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let city = synthetic_city(7);
        let store_path = dir.path().join("snapshots.ndjson");
        city.write_store(&store_path).unwrap();
        let zones_path = dir.path().join("zones.geojson");
        city.write_zones_geojson(&zones_path).unwrap();
        // Remove the stops sidecar: cleanse succeeds, usage fails before
        // writing anything; then fabricate a leftover usage.csv to check
        // the marker logic.
        fs::remove_file(store_path.with_file_name("snapshots.ndjson.stops.json")).unwrap();
        let mut config = PipelineConfig::new(&store_path, dir.path().join("out"));
        config.zones_path = Some(zones_path);
        fs::create_dir_all(&config.out_dir).unwrap();
        fs::write(config.out_dir.join("usage.csv"), b"stale\n").unwrap();
        let err = run_pipeline(&config).unwrap_err();
        match &err {
            Error::Stage { stage, .. } => assert_eq!(*stage, "usage"),
            other => panic!("expected a stage error, got {other:?}"),
        }
        assert!(config.out_dir.join("usage.csv.partial").exists());
        // The error message carries the stage tag.
        assert!(err.to_string().contains("usage"), "{err}");
    }

    #[test]
    fn pipeline_outputs_are_byte_identical_across_runs() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (config_a, manifest_a) = city_run(dir_a.path(), 42);
        let (config_b, _) = city_run(dir_b.path(), 42);
        for stage in &manifest_a.stages {
            for path in &stage.outputs {
                let name = path.file_name().unwrap();
                let a = fs::read(config_a.out_dir.join(name)).unwrap();
                let b = fs::read(config_b.out_dir.join(name)).unwrap();
                assert_eq!(a, b, "{name:?} differs between identical runs");
            }
        }
    }

    #[test]
    fn geojson_emits_one_point_per_stop() {
        let stops = vec![Stop {
            stop_id: "s1".into(),
            name: "Princes Street".into(),
            latitude: 55.95,
            longitude: -3.19,
        }];
        let usage = vec![StopUsage {
            stop_id: "s1".into(),
            vehicle_count: 12,
        }];
        let table = vec![StopClusterRow {
            stop_id: "s1".into(),
            latitude: 55.95,
            longitude: -3.19,
            vehicle_count: 12,
            cluster: 0,
        }];
        let doc = emit_geojson(&stops, &usage, &table).unwrap();
        assert_eq!(doc["type"], "FeatureCollection");
        let features = doc["features"].as_array().unwrap();
        assert_eq!(features.len(), 1);
        let f = &features[0];
        assert_eq!(f["type"], "Feature");
        assert_eq!(f["geometry"]["type"], "Point");
        // [longitude, latitude] ordering.
        assert_eq!(f["geometry"]["coordinates"][0], -3.19);
        assert_eq!(f["geometry"]["coordinates"][1], 55.95);
        assert_eq!(f["properties"]["stop_id"], "s1");
        assert_eq!(f["properties"]["vehicle_count"], 12);
        assert_eq!(f["properties"]["cluster"], 0);

        let mismatched = vec![StopUsage {
            stop_id: "other".into(),
            vehicle_count: 12,
        }];
        assert!(matches!(
            emit_geojson(&stops, &mismatched, &table),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn geojson_counts_match_stop_count() {
        let city = synthetic_city(7);
        let usage: Vec<StopUsage> = city
            .expected_usage
            .iter()
            .map(|(id, &count)| StopUsage {
                stop_id: id.clone(),
                vehicle_count: count,
            })
            .collect();
        let table: Vec<StopClusterRow> = city
            .stops
            .iter()
            .map(|s| StopClusterRow {
                stop_id: s.stop_id.clone(),
                latitude: s.latitude,
                longitude: s.longitude,
                vehicle_count: city.expected_usage[&s.stop_id],
                cluster: 1,
            })
            .collect();
        let doc = emit_geojson(&city.stops, &usage, &table).unwrap();
        assert_eq!(
            doc["features"].as_array().unwrap().len(),
            city.stops.len()
        );
    }

    #[test]
    fn clean_verb_preserves_record_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let city = synthetic_city(7);
        let store_path = dir.path().join("in.ndjson");
        city.write_store(&store_path).unwrap();
        let zones_path = dir.path().join("zones.geojson");
        city.write_zones_geojson(&zones_path).unwrap();
        let out_path = dir.path().join("clean.ndjson");
        let report_path = dir.path().join("report.json");
        let report = run_clean(
            &store_path,
            &out_path,
            Some(&zones_path),
            Some(&report_path),
        )
        .unwrap();
        assert_eq!(report, city.expected_cleanse);

        // The output is itself a valid store holding exactly the survivors,
        // with original batch ids intact.
        let cleaned = SnapshotStore::open(&out_path).unwrap();
        let records = cleaned.read_all().unwrap();
        assert_eq!(records.len(), report.output_count);
        assert!(records.iter().all(|r| r.batch_id.starts_with("synthetic-")));
        let parsed: CleanseReport =
            serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn kde_and_cluster_file_verbs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (config, _) = city_run(dir.path(), 42);
        let stops_path = config.store_path.with_file_name("snapshots.ndjson.stops.json");
        let usage_path = config.out_dir.join("usage.csv");

        let kde_out = dir.path().join("kde_verb.csv");
        let sidecar = run_kde_files(&stops_path, &usage_path, &kde_out, 300.0, &[], 64).unwrap();
        assert!(kde_out.exists());
        assert!(sidecar_path(&kde_out).exists());
        assert!(sidecar.total_weight > 0.0);
        assert!((0.9..=1.0).contains(&sidecar.integral));

        let cluster_out = dir.path().join("clusters_verb.csv");
        let model = run_cluster_files(
            &stops_path,
            &usage_path,
            &cluster_out,
            3,
            &KmeansConfig::default(),
        )
        .unwrap();
        assert_eq!(model.k, 3);
        assert!(dir.path().join("clusters_verb.model.json").exists());
        assert!(dir.path().join("clusters_verb.summary.json").exists());
        let text = fs::read_to_string(dir.path().join("clusters_verb.model.json")).unwrap();
        let doc: ClusterModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(doc.centroids_raw.len(), 3);
        // Raw centroid latitudes are inside the city.
        for c in &doc.centroids_raw {
            assert!((55.8..56.1).contains(&c[0]), "raw centroid {c:?}");
        }
    }

    #[test]
    fn usage_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("usage.csv");
        let usage = vec![
            StopUsage {
                stop_id: "a".into(),
                vehicle_count: 0,
            },
            StopUsage {
                stop_id: "b".into(),
                vehicle_count: 9000,
            },
        ];
        write_usage_csv(&path, &usage).unwrap();
        assert_eq!(read_usage_csv(&path).unwrap(), usage);
    }

    #[test]
    fn nna_verb_writes_parseable_json() {
        let dir = tempfile::tempdir().unwrap();
        let city = synthetic_city(7);
        let stops_path = dir.path().join("stops.json");
        // Bare array form.
        fs::write(&stops_path, serde_json::to_vec(&city.stops).unwrap()).unwrap();
        let out = dir.path().join("nna.json");
        let result = run_nna_file(&stops_path, &out, &NnaConfig::default()).unwrap();
        assert!(result.r < 0.8);
        let text = fs::read_to_string(&out).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_relative_eq!(value["R"].as_f64().unwrap(), result.r, epsilon = 1e-12);
        assert!(value["p_value"].is_string());
    }
}
