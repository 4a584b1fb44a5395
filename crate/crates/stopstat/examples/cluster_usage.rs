//! k-means over standardized (lat, lon, usage).
//!
//! Clusters the synthetic city's stops on position and vehicle count,
//! checks the labels against the designed ground truth, and scans k to
//! show how inertia and silhouette point at the right cluster count.

use stopstat::cluster::{
    adjusted_rand_index, cluster_stops, cluster_summary, k_selection_report, zscore, KmeansConfig,
};
use stopstat::synth::synthetic_city;
use stopstat::usage::StopUsage;

fn main() -> stopstat::Result<()> {
    let city = synthetic_city(7);
    let usage: Vec<StopUsage> = city
        .stops
        .iter()
        .map(|s| StopUsage {
            stop_id: s.stop_id.clone(),
            vehicle_count: city.expected_usage[&s.stop_id],
        })
        .collect();

    let config = KmeansConfig::default();
    let (model, table, features) = cluster_stops(&city.stops, &usage, 3, &config)?;
    println!(
        "k = {}: inertia {:.4} after {} iterations, sizes {:?}",
        model.k,
        model.inertia,
        model.iterations,
        model.cluster_sizes()
    );

    println!("\ncentroids (raw units):");
    for (cluster, centroid) in model.centroids.iter().enumerate() {
        let raw = features.destandardize(centroid);
        println!(
            "  cluster {cluster}: ({:.4}, {:.4}), {:.1} vehicles",
            raw[0], raw[1], raw[2]
        );
    }

    println!("\nper-cluster usage summaries:");
    for row in cluster_summary(&model, &table) {
        println!(
            "  cluster {} ({} stops): min {} / median {} / max {}{}",
            row.cluster,
            row.size,
            row.count_min,
            row.count_median,
            row.count_max,
            if row.outlier_stop_ids.is_empty() {
                String::new()
            } else {
                format!(", outliers {:?}", row.outlier_stop_ids)
            }
        );
    }

    let ari = adjusted_rand_index(&model.assignments, &city.truth_labels)?;
    println!("\nadjusted Rand index vs designed labels: {ari:.3}");
    assert_eq!(ari, 1.0, "three well-separated clumps are recovered exactly");

    // Scan k: inertia always falls, the silhouette peaks at the real count.
    let ids: Vec<String> = city.stops.iter().map(|s| s.stop_id.clone()).collect();
    let raw: Vec<[f64; 3]> = city
        .stops
        .iter()
        .map(|s| {
            [
                s.latitude,
                s.longitude,
                city.expected_usage[&s.stop_id] as f64,
            ]
        })
        .collect();
    let standardized = zscore(ids, &raw)?;
    println!("\nchoosing k:");
    println!("  {:>2}  {:>10}  {:>10}", "k", "inertia", "silhouette");
    let mut best = (1, f64::NEG_INFINITY);
    for row in k_selection_report(&standardized, &[1, 2, 3, 4, 5, 6], &config)? {
        let silhouette = row.mean_silhouette.unwrap_or(f64::NAN);
        println!("  {:>2}  {:>10.4}  {:>10.4}", row.k, row.inertia, silhouette);
        if silhouette > best.1 {
            best = (row.k, silhouette);
        }
    }
    println!("silhouette peaks at k = {}", best.0);
    Ok(())
}
