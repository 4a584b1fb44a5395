//! Acceptance gate: one test per criterion, each ending in a single
//! `criterion NN: PASS` line (visible with `--nocapture`). Criteria mix
//! fixed-value arithmetic checks on frozen reference figures with property
//! suites on synthetic fixtures, all at stated tolerances.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stopstat::cluster::{
    adjusted_rand_index, cluster_centroids, inertia, kmeans, zscore, FeatureRow, KmeansConfig,
    StandardizedFeatures,
};
use stopstat::geo::{AreaMethod, ProjectedPoint, Projection};
use stopstat::kde::{bandwidth_sweep, estimate_density, GridSpec};
use stopstat::nna::{
    log10_two_tailed_p, nni, run_nna, sigma_expected, z_test, NnaConfig, SpatialPattern,
};
use stopstat::report::{run_pipeline, ClusterModelDocument, KdeSidecar, PipelineConfig};
use stopstat::synth::synthetic_city;

fn pass(criterion: u32, detail: &str) {
    println!("criterion {criterion:02}: PASS - {detail}");
}

fn within(elapsed: Duration, budget_s: u64, label: &str) {
    assert!(
        elapsed < Duration::from_secs(budget_s),
        "{label} took {elapsed:?}, budget {budget_s} s"
    );
}

#[test]
fn criterion_01_reference_nni_arithmetic() {
    let r = nni(110.225, 642.191).unwrap();
    assert!(
        (r - 0.172).abs() <= 0.0005,
        "nni(110.225, 642.191) = {r}, expected 0.172 +- 0.0005"
    );
    pass(1, &format!("nni(110.225, 642.191) = {r:.5}, within 0.0005 of 0.172"));
}

#[test]
fn criterion_02_log_space_p_value() {
    let log10_p = log10_two_tailed_p(-97.691).unwrap();
    assert!(
        (log10_p - -2074.44).abs() <= 0.15,
        "log10 p at z = -97.691 is {log10_p}, expected -2074.44 +- 0.15"
    );
    // The naive computation underflows; the log-space path stays finite.
    assert!(log10_p.is_finite());
    pass(
        2,
        &format!("log10 p(z = -97.691) = {log10_p:.2}, within 0.15 of -2074.44 (p ~ 1e-2075, below f64 underflow)"),
    );
}

#[test]
fn criterion_03_z_chain_transparency() {
    // Published means with the density inverted from the expected distance:
    // r_bar_E = 1 / (2 sqrt(rho)) so rho = (1 / (2 r_bar_E))^2.
    let (r_bar_a, r_bar_e, n) = (110.225f64, 642.191f64, 3142usize);
    let rho = (1.0 / (2.0 * r_bar_e)).powi(2);
    let sigma = sigma_expected(n, rho).unwrap();
    let (z, log10_p) = z_test(r_bar_a, r_bar_e, n, rho).unwrap();
    assert!(
        (z - -88.8).abs() <= 0.2,
        "chained z = {z}, expected -88.8 +- 0.2"
    );
    // Every intermediate is surfaced and consistent with the direct formula.
    assert_eq!(z, (r_bar_a - r_bar_e) / sigma);
    assert!(rho > 0.0 && sigma > 0.0 && log10_p.is_finite());
    pass(
        3,
        &format!(
            "rho = {rho:.3e}, sigma = {sigma:.3} m, z = {z:.3} (within 0.2 of -88.8; \
             the reference |z| = 97.691 does not follow from the reference means)"
        ),
    );
}

#[test]
fn criterion_04_csr_calibration() {
    let start = Instant::now();
    let config = NnaConfig {
        area_method: AreaMethod::ConvexHull,
        ..NnaConfig::default()
    };
    let mut r_sum = 0.0;
    let mut clustered_rejections = 0usize;
    let seeds = 20u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let points: Vec<ProjectedPoint> = (0..5000)
            .map(|_| {
                ProjectedPoint::new(
                    rng.random_range(0.0..10_000.0),
                    rng.random_range(0.0..10_000.0),
                )
            })
            .collect();
        let result = run_nna(&points, &config).unwrap();
        r_sum += result.r;
        if result.significant && result.pattern == SpatialPattern::Clustered {
            clustered_rejections += 1;
        }
    }
    let mean_r = r_sum / seeds as f64;
    assert!(
        (0.98..=1.04).contains(&mean_r),
        "mean R over {seeds} CSR seeds = {mean_r}, expected in [0.98, 1.04]"
    );
    // Under 5% of 20 seeds means zero seeds may reject toward clustering.
    assert!(
        (clustered_rejections as f64) < 0.05 * seeds as f64,
        "{clustered_rejections} of {seeds} CSR seeds rejected as clustered at alpha 0.01"
    );
    within(start.elapsed(), 10, "CSR calibration");
    pass(
        4,
        &format!(
            "mean R = {mean_r:.4} over 20 uniform seeds, {clustered_rejections}/20 false clustering verdicts at alpha 0.01"
        ),
    );
}

#[test]
fn criterion_05_triangular_lattice_dispersion() {
    let start = Instant::now();
    let spacing = 100.0;
    let points: Vec<ProjectedPoint> = (0..40)
        .flat_map(|j| {
            (0..40).map(move |i| {
                ProjectedPoint::new(
                    i as f64 * spacing + (j % 2) as f64 * spacing / 2.0,
                    j as f64 * spacing * 3f64.sqrt() / 2.0,
                )
            })
        })
        .collect();
    let config = NnaConfig {
        area_method: AreaMethod::ConvexHull,
        ..NnaConfig::default()
    };
    let result = run_nna(&points, &config).unwrap();
    assert!(
        (2.0..=2.2).contains(&result.r),
        "triangular lattice R = {}, expected in [2.0, 2.2] (ideal 2.1491 minus edge effects)",
        result.r
    );
    assert_eq!(result.pattern, SpatialPattern::Dispersed);
    within(start.elapsed(), 1, "lattice dispersion");
    pass(
        5,
        &format!("40x40 triangular lattice R = {:.4}, inside [2.0, 2.2]", result.r),
    );
}

#[test]
fn criterion_06_kde_point_value_and_mass() {
    let start = Instant::now();
    // A 1x1 m cell centred exactly on a single unit-weight point.
    let spec = GridSpec::new(-0.5, -0.5, 1.0, 1.0, 1, 1).unwrap();
    let grid = estimate_density(&[ProjectedPoint::new(0.0, 0.0)], &[1.0], &spec, 1.0, 1.0).unwrap();
    let peak = grid.value_at(0, 0);
    let expected = 1.0 / std::f64::consts::TAU;
    assert!(
        (peak - expected).abs() <= 1e-12,
        "single-point density = {peak}, expected 1/(2 pi) +- 1e-12"
    );

    // Random weighted configurations with all kernel mass at least 4h from
    // the grid edge integrate to (just under) one.
    let h = 300.0;
    let mut integrals = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<ProjectedPoint> = (0..200)
            .map(|_| {
                ProjectedPoint::new(
                    rng.random_range(0.0..10_000.0),
                    rng.random_range(0.0..10_000.0),
                )
            })
            .collect();
        let weights: Vec<f64> = (0..200).map(|_| rng.random_range(0.5..5.0)).collect();
        let spec = GridSpec::covering(&points, 256, 256, 4.0 * h).unwrap();
        let grid = estimate_density(&points, &weights, &spec, h, h).unwrap();
        let integral = grid.integral();
        assert!(
            (0.98..=1.0).contains(&integral),
            "seed {seed}: grid integral = {integral}, expected in [0.98, 1.0]"
        );
        integrals.push(integral);
    }
    within(start.elapsed(), 5, "KDE point value and mass");
    pass(
        6,
        &format!(
            "single point gives 1/(2 pi) to 1e-12; integrals over 3 random configs = {integrals:?}"
        ),
    );
}

#[test]
fn criterion_07_bandwidth_sweep_merging() {
    let start = Instant::now();
    // Two clumps of five points each, 1.5 km apart: resolvable at h = 100 m,
    // merged at h = 1000 m (all pairwise separations stay under 2h there).
    // Offsets and weights are deliberately lopsided; a perfectly mirrored
    // fixture can tie the peak across two grid cells exactly, and a plateau
    // has no strict maximum.
    let clump = |cx: f64| {
        [
            (cx, 0.0),
            (cx + 40.0, 0.0),
            (cx - 35.0, 0.0),
            (cx, 40.0),
            (cx, -30.0),
        ]
    };
    let points: Vec<ProjectedPoint> = clump(0.0)
        .into_iter()
        .chain(clump(1500.0))
        .map(|(x, y)| ProjectedPoint::new(x, y))
        .collect();
    let weights: Vec<f64> = (0..points.len())
        .map(|i| if i < 5 { 1.0 } else { 1.2 })
        .collect();
    let sweep_m = [100.0, 300.0, 500.0, 800.0, 1000.0];
    let spec = GridSpec::covering(&points, 128, 128, 3.0 * sweep_m[sweep_m.len() - 1]).unwrap();
    let entries = bandwidth_sweep(&points, &weights, &spec, &sweep_m).unwrap();

    let maxima_small = entries[0].grid.strict_local_maxima().len();
    let maxima_large = entries[entries.len() - 1].grid.strict_local_maxima().len();
    assert_eq!(maxima_small, 2, "expected two modes at h = 100 m");
    assert_eq!(maxima_large, 1, "expected one merged mode at h = 1000 m");
    for pair in entries.windows(2) {
        assert!(
            pair[1].summary.max_density <= pair[0].summary.max_density,
            "peak density rose from h = {} to h = {}",
            pair[0].summary.h_m,
            pair[1].summary.h_m
        );
    }
    within(start.elapsed(), 5, "bandwidth sweep");
    pass(
        7,
        &format!(
            "two-clump surface has {maxima_small} maxima at h = 0.1 km and {maxima_large} at h = 1.0 km; peak non-increasing across the sweep"
        ),
    );
}

/// Lowest inertia over every partition of `data` into exactly `k` non-empty
/// clusters, using the solver's own centroid and inertia helpers so equality
/// holds bit for bit.
fn exhaustive_optimum(data: &[FeatureRow], k: usize) -> f64 {
    fn recurse(
        data: &[FeatureRow],
        k: usize,
        assignments: &mut Vec<usize>,
        used: usize,
        best: &mut f64,
    ) {
        if assignments.len() == data.len() {
            if used == k {
                let centroids = cluster_centroids(data, assignments, k);
                let sse = inertia(data, assignments, &centroids);
                if sse < *best {
                    *best = sse;
                }
            }
            return;
        }
        // Canonical labelings only: the next row may open at most one new
        // cluster, which enumerates set partitions without relabelings.
        for label in 0..=used.min(k - 1) {
            assignments.push(label);
            recurse(data, k, assignments, used.max(label + 1), best);
            assignments.pop();
        }
    }
    let mut best = f64::INFINITY;
    recurse(data, k, &mut Vec::with_capacity(data.len()), 0, &mut best);
    best
}

fn features_from(matrix: Vec<FeatureRow>) -> StandardizedFeatures {
    StandardizedFeatures {
        row_ids: (0..matrix.len()).map(|i| format!("r{i}")).collect(),
        matrix,
        means: [0.0; 3],
        stds: [1.0; 3],
        constant_columns: [false; 3],
    }
}

#[test]
fn criterion_08_kmeans_exhaustive_oracle() {
    let start = Instant::now();
    let mut fixtures: Vec<(String, Vec<FeatureRow>)> = Vec::new();
    for seed in 1..=4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..8)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        fixtures.push((format!("random seed {seed}"), rows));
    }
    fixtures.push(("five coincident points".into(), vec![[2.0, -1.0, 0.5]; 5]));
    fixtures.push((
        "two tight pairs and an outlier".into(),
        vec![
            [0.0, 0.0, 0.0],
            [1e-6, 0.0, 0.0],
            [10.0, 10.0, 10.0],
            [10.0 + 1e-6, 10.0, 10.0],
            [-10.0, 5.0, 2.0],
        ],
    ));
    fixtures.push((
        "uneven collinear points".into(),
        (0..8).map(|i| [(i * i) as f64, 0.0, 0.0]).collect(),
    ));

    let config = KmeansConfig::default();
    assert_eq!(config.restarts, 20);
    let mut cases = 0;
    for (name, rows) in &fixtures {
        let features = features_from(rows.clone());
        for k in 1..=3usize {
            let model = kmeans(&features, k, &config).unwrap();
            let optimum = exhaustive_optimum(rows, k);
            assert_eq!(
                model.inertia, optimum,
                "{name}, k = {k}: solver inertia differs from the exhaustive optimum"
            );
            // Lloyd monotonicity, re-checked on the recorded trace of every
            // run (the solver also debug-asserts it on every iteration).
            for pair in model.inertia_trace.windows(2) {
                assert!(pair[1] <= pair[0], "{name}, k = {k}: inertia rose");
            }
            cases += 1;
        }
    }
    within(start.elapsed(), 10, "k-means oracle");
    pass(
        8,
        &format!("best-of-20 inertia equals the exhaustive optimum exactly in all {cases} fixture/k cases"),
    );
}

#[test]
fn criterion_09_standardization() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300usize;
    // Third column is constant at a value whose mean cannot be accumulated
    // exactly, the hard case for variance-led detection.
    let constant = 0.1 + 0.2;
    let raw: Vec<FeatureRow> = (0..n)
        .map(|_| {
            [
                rng.random_range(-3.0..7.0) * 1e3,
                rng.random_range(100.0..200.0),
                constant,
            ]
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let features = zscore(ids, &raw).unwrap();

    assert_eq!(features.constant_columns, [false, false, true]);
    for d in 0..2 {
        let mean = features.matrix.iter().map(|r| r[d]).sum::<f64>() / n as f64;
        let var = features.matrix.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(
            mean.abs() < 1e-9,
            "column {d} standardized mean = {mean}, expected |mean| < 1e-9"
        );
        assert!(
            (var.sqrt() - 1.0).abs() < 1e-9,
            "column {d} standardized sigma = {}, expected within 1e-9 of 1",
            var.sqrt()
        );
    }
    assert!(features.matrix.iter().all(|r| r[2] == 0.0));
    pass(
        9,
        "non-constant columns have |mean| < 1e-9 and |sigma - 1| < 1e-9; the constant column is flagged and zeroed",
    );
}

fn run_city_pipeline(dir: &Path) -> (PipelineConfig, Vec<(String, Vec<u8>)>) {
    let city = synthetic_city(7);
    let store_path = dir.join("snapshots.ndjson");
    city.write_store(&store_path).unwrap();
    let zones_path = dir.join("zones.geojson");
    city.write_zones_geojson(&zones_path).unwrap();
    let mut config = PipelineConfig::new(&store_path, dir.join("out"));
    config.zones_path = Some(zones_path);
    config.k = 3;
    let manifest = run_pipeline(&config).unwrap();
    let mut outputs: Vec<(String, Vec<u8>)> = manifest
        .stages
        .iter()
        .flat_map(|s| s.outputs.iter())
        .map(|path| {
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(path).unwrap(),
            )
        })
        .collect();
    outputs.sort_by(|a, b| a.0.cmp(&b.0));
    (config, outputs)
}

#[test]
fn criterion_10_synthetic_city_end_to_end() {
    let start = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (config, outputs_a) = run_city_pipeline(dir_a.path());
    let (_, outputs_b) = run_city_pipeline(dir_b.path());
    let city = synthetic_city(7);

    // Clustered stop pattern.
    let nna: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config.out_dir.join("nna.json")).unwrap())
            .unwrap();
    let r = nna["R"].as_f64().unwrap();
    assert!(r < 0.8, "synthetic city R = {r}, expected < 0.8");

    // Density argmax within one cell of the heaviest hub.
    let kde: KdeSidecar =
        serde_json::from_str(&fs::read_to_string(config.out_dir.join("kde.json")).unwrap())
            .unwrap();
    let projection = Projection::new(kde.reference_latitude, kde.reference_longitude).unwrap();
    let hub = projection
        .project(city.hub_latitude, city.hub_longitude)
        .unwrap();
    let hub_ix = ((hub.x - kde.grid.origin_x) / kde.grid.cell_width).floor() as isize;
    let hub_iy = ((hub.y - kde.grid.origin_y) / kde.grid.cell_height).floor() as isize;
    let (ax, ay) = (kde.argmax_cell.0 as isize, kde.argmax_cell.1 as isize);
    assert!(
        (ax - hub_ix).abs() <= 1 && (ay - hub_iy).abs() <= 1,
        "KDE argmax {:?} is not within 1 cell of the hub cell ({hub_ix}, {hub_iy})",
        kde.argmax_cell
    );

    // Exact recovery of the designed clusters.
    let model: ClusterModelDocument = serde_json::from_str(
        &fs::read_to_string(config.out_dir.join("cluster_model.json")).unwrap(),
    )
    .unwrap();
    let truth_by_id: std::collections::BTreeMap<&str, usize> = city
        .stops
        .iter()
        .zip(&city.truth_labels)
        .map(|(s, &label)| (s.stop_id.as_str(), label))
        .collect();
    let truth: Vec<usize> = model
        .model
        .row_ids
        .iter()
        .map(|id| truth_by_id[id.as_str()])
        .collect();
    let ari = adjusted_rand_index(&model.model.assignments, &truth).unwrap();
    assert_eq!(ari, 1.0, "k = 3 ARI vs ground truth = {ari}, expected exactly 1.0");

    // Byte-identical analysis outputs across two runs of the same config.
    assert_eq!(outputs_a.len(), outputs_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in outputs_a.iter().zip(&outputs_b) {
        assert_eq!(name_a, name_b);
        assert!(bytes_a == bytes_b, "{name_a} differs between identical runs");
    }
    within(start.elapsed(), 30, "synthetic city end to end");
    pass(
        10,
        &format!(
            "pipeline gives R = {r:.3}, density argmax at the hub, ARI = 1.0, and {} byte-identical outputs across two runs",
            outputs_a.len()
        ),
    );
}

#[test]
fn criterion_11_cleanse_audit() {
    for seed in [7u64, 12345] {
        let city = synthetic_city(seed);
        let (kept, report) = stopstat::cleanse::cleanse(city.observations.clone(), &city.zones).unwrap();
        assert_eq!(report, city.expected_cleanse, "seed {seed}: audit counts");
        assert_eq!(
            report.input_count,
            report.output_count + report.removed_total(),
            "seed {seed}: conservation identity"
        );
        assert_eq!(kept.len(), report.output_count);
    }
    let report = synthetic_city(7).expected_cleanse;
    pass(
        11,
        &format!(
            "fixture reproduces the audit exactly: {} in = {} out + ({} + {} + {} + {}) removed",
            report.input_count,
            report.output_count,
            report.removed_null_heading,
            report.removed_depot,
            report.removed_inactive_route,
            report.removed_unserviced
        ),
    );
}
