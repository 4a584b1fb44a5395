//! k-means clustering of stops on standardized (lat, lon, usage) features.
//!
//! The raw feature matrix is one row per stop: latitude and longitude in
//! degrees plus the stop's vehicle count. [`zscore`] centers each column and
//! scales it to unit population variance (`x' = (x - mean) / sigma`);
//! [`kmeans`] then minimizes the within-cluster sum of squared Euclidean
//! distances in that standardized space. Everything downstream of the seed
//! is deterministic, so a (features, k, seed, restarts) tuple always
//! reproduces the same model.

mod kmeans;

pub use kmeans::{
    assign_to_nearest, cluster_centroids, inertia, kmeans, mean_silhouette, feature_dist_sq,
    k_selection_report, KSelectionRow, KmeansConfig,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Projection;
use crate::ingest::Stop;
use crate::usage::StopUsage;

/// Columns per feature row: latitude, longitude, vehicle count.
pub const FEATURE_DIM: usize = 3;

/// One observation in feature space.
pub type FeatureRow = [f64; FEATURE_DIM];

/// Column-standardized feature matrix with enough context to undo the
/// transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedFeatures {
    pub row_ids: Vec<String>,
    pub matrix: Vec<FeatureRow>,
    pub means: FeatureRow,
    /// Population standard deviations; 0.0 for flagged columns.
    pub stds: FeatureRow,
    /// True where the raw column was constant and the standardized column
    /// was therefore zeroed instead of divided by sigma = 0.
    pub constant_columns: [bool; FEATURE_DIM],
}

impl StandardizedFeatures {
    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    /// Map a standardized point (a centroid, say) back to raw units.
    /// Flagged columns return their constant raw value.
    pub fn destandardize(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURE_DIM];
        for d in 0..FEATURE_DIM {
            out[d] = row[d] * self.stds[d] + self.means[d];
        }
        out
    }
}

/// Standardize each column to mean 0 and unit population variance.
/// A constant column cannot be scaled, so it is zeroed and flagged.
pub fn zscore(row_ids: Vec<String>, raw: &[FeatureRow]) -> Result<StandardizedFeatures> {
    let n = raw.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "standardization needs at least two rows, got {n}"
        )));
    }
    if row_ids.len() != n {
        return Err(Error::Consistency(format!(
            "{} row ids for {n} feature rows",
            row_ids.len()
        )));
    }
    {
        let unique: BTreeSet<&String> = row_ids.iter().collect();
        if unique.len() != n {
            return Err(Error::Consistency("duplicate row ids in feature matrix".into()));
        }
    }
    for (i, row) in raw.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "feature rows must be finite, row {i} = {row:?}"
            )));
        }
    }

    let mut means = [0.0; FEATURE_DIM];
    let mut stds = [0.0; FEATURE_DIM];
    let mut constant_columns = [false; FEATURE_DIM];
    let mut matrix = vec![[0.0; FEATURE_DIM]; n];

    for d in 0..FEATURE_DIM {
        let first = raw[0][d];
        if raw.iter().all(|row| row[d] == first) {
            // All-equal check runs before any arithmetic so accumulated
            // rounding in the mean cannot fake a nonzero variance.
            means[d] = first;
            constant_columns[d] = true;
            continue;
        }
        let mean = raw.iter().map(|row| row[d]).sum::<f64>() / n as f64;
        let variance = raw
            .iter()
            .map(|row| {
                let delta = row[d] - mean;
                delta * delta
            })
            .sum::<f64>()
            / n as f64;
        let std = variance.sqrt();
        means[d] = mean;
        if std == 0.0 {
            constant_columns[d] = true;
            continue;
        }
        stds[d] = std;
        for (out, row) in matrix.iter_mut().zip(raw) {
            out[d] = (row[d] - mean) / std;
        }
    }

    Ok(StandardizedFeatures {
        row_ids,
        matrix,
        means,
        stds,
        constant_columns,
    })
}

/// Fitted k-means state in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<FeatureRow>,
    pub row_ids: Vec<String>,
    /// Cluster index per row, parallel to `row_ids`.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances (the clustering objective).
    pub inertia: f64,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Objective after each iteration of the winning restart;
    /// non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn assignment_of(&self, row_id: &str) -> Option<usize> {
        self.row_ids
            .iter()
            .position(|id| id == row_id)
            .map(|i| self.assignments[i])
    }
}

/// Which coordinates feed the spatial feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Raw latitude/longitude degrees.
    Degrees,
    /// Locally projected metres (east, north); spatial distances then carry
    /// their metric meaning into the standardization.
    ProjectedMeters,
}

/// One row of the per-stop clustering table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopClusterRow {
    pub stop_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub vehicle_count: u64,
    pub cluster: usize,
}

/// Cluster stops on (lat, lon, count) features; returns the fitted model,
/// the per-stop assignment table, and the standardization used (for mapping
/// centroids back to raw units).
pub fn cluster_stops(
    stops: &[Stop],
    usage: &[StopUsage],
    k: usize,
    config: &KmeansConfig,
) -> Result<(ClusterModel, Vec<StopClusterRow>, StandardizedFeatures)> {
    cluster_stops_in(FeatureSpace::Degrees, stops, usage, k, config)
}

/// [`cluster_stops`] with an explicit spatial feature space.
pub fn cluster_stops_in(
    space: FeatureSpace,
    stops: &[Stop],
    usage: &[StopUsage],
    k: usize,
    config: &KmeansConfig,
) -> Result<(ClusterModel, Vec<StopClusterRow>, StandardizedFeatures)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for u in usage {
        if counts.insert(u.stop_id.as_str(), u.vehicle_count).is_some() {
            return Err(Error::Consistency(format!(
                "usage table lists stop '{}' twice",
                u.stop_id
            )));
        }
    }
    let stop_ids: BTreeSet<&str> = stops.iter().map(|s| s.stop_id.as_str()).collect();
    if stop_ids.len() != stops.len() {
        return Err(Error::Consistency("duplicate stop ids in stop list".into()));
    }
    for id in counts.keys() {
        if !stop_ids.contains(id) {
            return Err(Error::Consistency(format!(
                "usage table references unknown stop '{id}'"
            )));
        }
    }
    for id in &stop_ids {
        if !counts.contains_key(id) {
            return Err(Error::Consistency(format!(
                "usage table does not cover stop '{id}'"
            )));
        }
    }

    let projection = match space {
        FeatureSpace::Degrees => None,
        FeatureSpace::ProjectedMeters => Some(Projection::centered_on(
            stops.iter().map(|s| (s.latitude, s.longitude)),
        )?),
    };
    let mut row_ids = Vec::with_capacity(stops.len());
    let mut raw = Vec::with_capacity(stops.len());
    let mut table = Vec::with_capacity(stops.len());
    for stop in stops {
        let count = counts[stop.stop_id.as_str()];
        let (a, b) = match &projection {
            None => (stop.latitude, stop.longitude),
            Some(p) => {
                let q = p.project(stop.latitude, stop.longitude)?;
                (q.x, q.y)
            }
        };
        row_ids.push(stop.stop_id.clone());
        raw.push([a, b, count as f64]);
        table.push(StopClusterRow {
            stop_id: stop.stop_id.clone(),
            latitude: stop.latitude,
            longitude: stop.longitude,
            vehicle_count: count,
            cluster: 0,
        });
    }

    let features = zscore(row_ids, &raw)?;
    let model = kmeans(&features, k, config)?;
    for (row, &a) in table.iter_mut().zip(&model.assignments) {
        row.cluster = a;
    }
    Ok((model, table, features))
}

/// Per-cluster activity statistics for boxplot-style reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummaryRow {
    pub cluster: usize,
    pub size: usize,
    pub count_min: f64,
    pub count_q1: f64,
    pub count_median: f64,
    pub count_q3: f64,
    pub count_max: f64,
    /// Stops whose count falls outside [q1 - 1.5 IQR, q3 + 1.5 IQR].
    pub outlier_stop_ids: Vec<String>,
}

/// Linear-interpolation quantile on a sorted slice: the value at fractional
/// rank `(n - 1) * p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarize the activity distribution inside each cluster of `table`.
pub fn cluster_summary(model: &ClusterModel, table: &[StopClusterRow]) -> Vec<ClusterSummaryRow> {
    (0..model.k)
        .map(|cluster| {
            let members: Vec<&StopClusterRow> =
                table.iter().filter(|row| row.cluster == cluster).collect();
            if members.is_empty() {
                return ClusterSummaryRow {
                    cluster,
                    size: 0,
                    count_min: 0.0,
                    count_q1: 0.0,
                    count_median: 0.0,
                    count_q3: 0.0,
                    count_max: 0.0,
                    outlier_stop_ids: Vec::new(),
                };
            }
            let mut counts: Vec<f64> = members.iter().map(|r| r.vehicle_count as f64).collect();
            counts.sort_by(|a, b| a.partial_cmp(b).expect("counts are finite"));
            let q1 = quantile_sorted(&counts, 0.25);
            let q3 = quantile_sorted(&counts, 0.75);
            let iqr = q3 - q1;
            let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
            let outlier_stop_ids = members
                .iter()
                .filter(|r| {
                    let c = r.vehicle_count as f64;
                    c < lo_fence || c > hi_fence
                })
                .map(|r| r.stop_id.clone())
                .collect();
            ClusterSummaryRow {
                cluster,
                size: members.len(),
                count_min: counts[0],
                count_q1: q1,
                count_median: quantile_sorted(&counts, 0.5),
                count_q3: q3,
                count_max: *counts.last().expect("non-empty"),
                outlier_stop_ids,
            }
        })
        .collect()
}

fn comb2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index between two labelings of the same rows; 1.0 means
/// identical partitions, ~0 means chance-level agreement.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "labelings differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("labelings are empty".into()));
    }
    let mut contingency: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *contingency.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let sum_cells: u64 = contingency.values().map(|&n| comb2(n)).sum();
    let sum_rows: u64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_cols: u64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_rows as f64 * sum_cols as f64 / total as f64;
    let maximum = 0.5 * (sum_rows + sum_cols) as f64;
    if maximum == expected {
        // Both partitions are single-cluster (or equivalent degenerate
        // cases): identical by construction.
        return Ok(1.0);
    }
    Ok((sum_cells as f64 - expected) / (maximum - expected))
}
