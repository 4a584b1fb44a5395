//! Snapshots to reports in one call.
//!
//! Writes the synthetic city to a snapshot store, runs the whole analysis
//! pipeline over it, and pokes through the output directory: manifest,
//! nearest-neighbour verdict, density peak, and cluster breakdown.

use std::fs;

use stopstat::report::{run_pipeline, KdeSidecar, PipelineConfig, RunManifest};
use stopstat::synth::synthetic_city;

fn main() -> stopstat::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let city = synthetic_city(7);
    let store_path = dir.path().join("snapshots.ndjson");
    city.write_store(&store_path)?;
    let zones_path = dir.path().join("zones.geojson");
    city.write_zones_geojson(&zones_path)?;

    let mut config = PipelineConfig::new(&store_path, dir.path().join("out"));
    config.zones_path = Some(zones_path);
    config.k = 3;
    config.sweep_m = vec![100.0, 300.0, 500.0, 800.0, 1000.0];

    let manifest: RunManifest = run_pipeline(&config)?;
    println!("pipeline stages:");
    for stage in &manifest.stages {
        let names: Vec<_> = stage
            .outputs
            .iter()
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()))
            .collect();
        println!("  {:<8} {:>4} ms  {}", stage.name, stage.duration_ms, names.join(", "));
    }
    println!("warnings: {}", manifest.warnings.len());

    let read = |name: &str| fs::read_to_string(config.out_dir.join(name)).expect("stage output");

    let nna: serde_json::Value = serde_json::from_str(&read("nna.json")).expect("nna json");
    println!(
        "\nstop pattern: R = {:.3}, z = {:.2}, {} at alpha {}",
        nna["R"].as_f64().unwrap(),
        nna["z"].as_f64().unwrap(),
        nna["pattern"].as_str().unwrap(),
        nna["alpha"].as_f64().unwrap()
    );

    let kde: KdeSidecar = serde_json::from_str(&read("kde.json")).expect("kde sidecar");
    println!(
        "density: peak {:.3e} at cell {:?} on a {}x{} grid, integral {:.4}",
        kde.max_density, kde.argmax_cell, kde.grid.nx, kde.grid.ny, kde.integral
    );

    let summary: serde_json::Value =
        serde_json::from_str(&read("cluster_summary.json")).expect("cluster summary");
    println!("clusters:");
    for row in summary.as_array().unwrap() {
        println!(
            "  cluster {}: {} stops, median count {}",
            row["cluster"], row["size"], row["count_median"]
        );
    }

    let geojson: serde_json::Value =
        serde_json::from_str(&read("stops.geojson")).expect("geojson");
    println!(
        "stops.geojson: {} point features ready for a map",
        geojson["features"].as_array().unwrap().len()
    );

    // Everything is reproducible: the manifest echoes the exact parameters.
    let manifest_file: RunManifest =
        serde_json::from_str(&read("manifest.json")).expect("manifest json");
    assert_eq!(manifest_file.parameters, config);
    println!("\nmanifest parameters reproduce the run exactly");
    Ok(())
}
