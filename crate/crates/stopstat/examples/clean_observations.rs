//! Filtering rules and what they each remove.
//!
//! Runs the four cleaning rules over a synthetic feed with known defects
//! and walks through the audit report, both in memory and via the
//! file-to-file `clean` entry point.

use stopstat::cleanse::cleanse;
use stopstat::report::run_clean;
use stopstat::synth::synthetic_city;

fn main() -> stopstat::Result<()> {
    let city = synthetic_city(7);
    println!(
        "synthetic feed: {} observations over {} stops",
        city.observations.len(),
        city.stops.len()
    );

    // In memory: observations + depot zones in, survivors + audit out.
    let (kept, report) = cleanse(city.observations.clone(), &city.zones)?;
    println!("\nrule-by-rule removals:");
    println!("  no heading (inactive vehicle)   {:>4}", report.removed_null_heading);
    println!("  inside a depot zone             {:>4}", report.removed_depot);
    println!("  missing next stop/destination   {:>4}", report.removed_inactive_route);
    println!("  unserviced or 'Not in Service'  {:>4}", report.removed_unserviced);
    println!(
        "kept {} of {} ({} removed)",
        report.output_count,
        report.input_count,
        report.removed_total()
    );
    assert_eq!(report.output_count, kept.len());
    assert_eq!(
        report.input_count,
        report.output_count + report.removed_total(),
        "every removal is attributed to exactly one rule"
    );

    // Same thing file to file: clean store in, clean store + report out.
    let dir = tempfile::tempdir().expect("temp dir");
    let raw = dir.path().join("raw.ndjson");
    let zones = dir.path().join("zones.geojson");
    city.write_store(&raw)?;
    city.write_zones_geojson(&zones)?;
    let cleaned = dir.path().join("clean.ndjson");
    let file_report = run_clean(&raw, &cleaned, Some(&zones), None)?;
    assert_eq!(file_report, report);
    println!(
        "\nfile round trip wrote {} surviving records to {}",
        file_report.output_count,
        cleaned.display()
    );
    Ok(())
}
