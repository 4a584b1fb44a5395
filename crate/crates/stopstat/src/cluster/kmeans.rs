//! Lloyd's algorithm with k-means++ seeding and best-of-restarts selection.
//!
//! Numerical discipline: centroid means and the inertia objective are always
//! accumulated in ascending row order through [`cluster_centroids`] and
//! [`inertia`], so a model is reproducible bit-for-bit from (features, k,
//! seed, restarts) and external checks of the objective see the exact stored
//! value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterModel, FeatureRow, StandardizedFeatures, FEATURE_DIM};
use crate::error::{Error, Result};

/// Search parameters; the defaults match the analysis presets
/// (seed 42, 20 restarts, 300 iterations, tolerance 1e-6).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Converged when no centroid moves at least this far (standardized
    /// units) in one update.
    pub tolerance: f64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            seed: 42,
            restarts: 20,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

/// Squared Euclidean distance between feature rows.
pub fn feature_dist_sq(a: &FeatureRow, b: &FeatureRow) -> f64 {
    let mut acc = 0.0;
    for d in 0..FEATURE_DIM {
        let delta = a[d] - b[d];
        acc += delta * delta;
    }
    acc
}

/// Mean of the rows assigned to each cluster, accumulated in row order.
/// A cluster with no members yields a NaN row; callers repair empties
/// before using the result.
pub fn cluster_centroids(data: &[FeatureRow], assignments: &[usize], k: usize) -> Vec<FeatureRow> {
    let mut sums = vec![[0.0f64; FEATURE_DIM]; k];
    let mut counts = vec![0usize; k];
    for (x, &a) in data.iter().zip(assignments) {
        for d in 0..FEATURE_DIM {
            sums[a][d] += x[d];
        }
        counts[a] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(sum, &count)| {
            if count == 0 {
                [f64::NAN; FEATURE_DIM]
            } else {
                let mut c = [0.0; FEATURE_DIM];
                for d in 0..FEATURE_DIM {
                    c[d] = sum[d] / count as f64;
                }
                c
            }
        })
        .collect()
}

/// The clustering objective: total squared distance from each row to its
/// assigned centroid, accumulated in row order.
pub fn inertia(data: &[FeatureRow], assignments: &[usize], centroids: &[FeatureRow]) -> f64 {
    data.iter()
        .zip(assignments)
        .map(|(x, &a)| feature_dist_sq(x, &centroids[a]))
        .sum()
}

/// Nearest-centroid index per row; ties go to the lowest cluster index.
pub fn assign_to_nearest(data: &[FeatureRow], centroids: &[FeatureRow]) -> Vec<usize> {
    data.iter()
        .map(|x| {
            let mut best = (0usize, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = feature_dist_sq(x, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

/// Give each empty cluster the point farthest from its current centroid,
/// drawing only from clusters that can spare a member.
fn repair_empty_clusters(
    data: &[FeatureRow],
    assignments: &mut [usize],
    centroids: &[FeatureRow],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = feature_dist_sq(&data[i], &centroids[a]);
            let better = match donor {
                None => true,
                Some((_, best)) => d > best,
            };
            if better {
                donor = Some((i, d));
            }
        }
        if let Some((i, _)) = donor {
            sizes[assignments[i]] -= 1;
            assignments[i] = empty;
            sizes[empty] += 1;
        }
    }
}

struct LloydOutcome {
    centroids: Vec<FeatureRow>,
    assignments: Vec<usize>,
    inertia: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// One Lloyd run from the given initial centroids. Terminates at the exact
/// assignment fixed point, on sub-tolerance centroid movement, or at the
/// iteration cap; the returned state is always self-consistent (centroids
/// are the means of the returned assignments).
fn lloyd(
    data: &[FeatureRow],
    mut centroids: Vec<FeatureRow>,
    max_iterations: usize,
    tolerance: f64,
) -> LloydOutcome {
    let k = centroids.len();
    let mut assignments: Vec<usize> = Vec::new();
    let mut current_inertia = f64::INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0;

    for iter in 1..=max_iterations {
        let mut next = assign_to_nearest(data, &centroids);
        repair_empty_clusters(data, &mut next, &centroids, k);
        if iter > 1 && next == assignments {
            break;
        }
        assignments = next;
        let updated = cluster_centroids(data, &assignments, k);
        let mut moved_sq = 0.0f64;
        for (old, new) in centroids.iter().zip(&updated) {
            moved_sq = moved_sq.max(feature_dist_sq(old, new));
        }
        centroids = updated;
        let next_inertia = inertia(data, &assignments, &centroids);
        debug_assert!(
            next_inertia <= current_inertia,
            "objective rose from {current_inertia} to {next_inertia} at iteration {iter}"
        );
        current_inertia = next_inertia;
        trace.push(next_inertia);
        iterations = iter;
        if moved_sq < tolerance * tolerance {
            break;
        }
    }

    LloydOutcome {
        centroids,
        assignments,
        inertia: current_inertia,
        iterations,
        trace,
    }
}

/// k-means++ seeding: first center uniform over rows, each further center
/// drawn with probability proportional to squared distance from the chosen
/// set. All-zero residual mass (every row already a center) falls back to
/// row 0.
fn kmeans_plus_plus(data: &[FeatureRow], k: usize, rng: &mut ChaCha8Rng) -> Vec<FeatureRow> {
    let first = rng.random_range(0..data.len());
    let mut centers = vec![data[first]];
    let mut best_d2: Vec<f64> = data
        .iter()
        .map(|x| feature_dist_sq(x, &data[first]))
        .collect();
    while centers.len() < k {
        let total: f64 = best_d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = data.len() - 1;
            for (i, &w) in best_d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            0
        };
        centers.push(data[chosen]);
        for (slot, x) in best_d2.iter_mut().zip(data) {
            let d = feature_dist_sq(x, &data[chosen]);
            if d < *slot {
                *slot = d;
            }
        }
    }
    centers
}

fn validate_kmeans_args(n: usize, k: usize, config: &KmeansConfig) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!(
            "k must satisfy 1 <= k <= {n} rows, got {k}"
        )));
    }
    if config.restarts == 0 || config.max_iterations == 0 {
        return Err(Error::Config(format!(
            "restarts and max_iterations must be at least 1, got {} and {}",
            config.restarts, config.max_iterations
        )));
    }
    if !(config.tolerance >= 0.0) || !config.tolerance.is_finite() {
        return Err(Error::Config(format!(
            "tolerance must be finite and non-negative, got {}",
            config.tolerance
        )));
    }
    Ok(())
}

/// Fit k clusters to the standardized features, keeping the best of
/// `config.restarts` independent k-means++ starts. Ties on inertia keep the
/// earliest restart, so the result is a pure function of the inputs.
pub fn kmeans(features: &StandardizedFeatures, k: usize, config: &KmeansConfig) -> Result<ClusterModel> {
    validate_kmeans_args(features.len(), k, config)?;
    let data = &features.matrix;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<LloydOutcome> = None;
    for _ in 0..config.restarts {
        let init = kmeans_plus_plus(data, k, &mut rng);
        let outcome = lloyd(data, init, config.max_iterations, config.tolerance);
        let improved = match &best {
            None => true,
            Some(prev) => outcome.inertia < prev.inertia,
        };
        if improved {
            best = Some(outcome);
        }
    }
    let winner = best.expect("at least one restart ran");
    debug_assert!(winner.centroids.iter().flatten().all(|v| v.is_finite()));
    Ok(ClusterModel {
        k,
        centroids: winner.centroids,
        row_ids: features.row_ids.clone(),
        assignments: winner.assignments,
        inertia: winner.inertia,
        iterations: winner.iterations,
        seed: config.seed,
        restarts: config.restarts,
        inertia_trace: winner.trace,
    })
}

/// One row of the k-selection diagnostic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionRow {
    pub k: usize,
    pub inertia: f64,
    pub min_cluster_size: usize,
    /// Mean silhouette over all rows; absent for k = 1 where the score is
    /// undefined.
    pub mean_silhouette: Option<f64>,
}

/// Mean silhouette score of a labeling; `None` when fewer than two clusters
/// are in use. Singleton rows score 0 by convention.
pub fn mean_silhouette(data: &[FeatureRow], assignments: &[usize], k: usize) -> Option<f64> {
    if k < 2 || data.len() < 2 {
        return None;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let mut total = 0.0;
    for (i, x) in data.iter().enumerate() {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue; // contributes 0
        }
        let mut sum_dist = vec![0.0f64; k];
        for (j, y) in data.iter().enumerate() {
            if i == j {
                continue;
            }
            sum_dist[assignments[j]] += feature_dist_sq(x, y).sqrt();
        }
        let a = sum_dist[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sum_dist[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / data.len() as f64)
}

/// Index the rows of `prev` by distance-to-centroid, largest first; used to
/// pick extra seed centers when growing a k-solution.
fn farthest_rows(data: &[FeatureRow], prev: &ClusterModel, extra: usize) -> Vec<usize> {
    let mut by_distance: Vec<(usize, f64)> = data
        .iter()
        .enumerate()
        .map(|(i, x)| (i, feature_dist_sq(x, &prev.centroids[prev.assignments[i]])))
        .collect();
    by_distance.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
    by_distance.into_iter().take(extra).map(|(i, _)| i).collect()
}

/// Diagnostics over a range of k: objective value, smallest cluster, and
/// mean silhouette per k. With fixed seed and restarts the reported inertia
/// is non-increasing in k; if the independent restarts ever miss that, the
/// k-solution is regrown from the previous centroids plus the farthest
/// rows, which restores monotonicity by construction.
pub fn k_selection_report(
    features: &StandardizedFeatures,
    k_range: &[usize],
    config: &KmeansConfig,
) -> Result<Vec<KSelectionRow>> {
    if k_range.is_empty() {
        return Err(Error::Domain("k_range must not be empty".into()));
    }
    let data = &features.matrix;
    let mut rows = Vec::with_capacity(k_range.len());
    let mut prev: Option<ClusterModel> = None;
    for &k in k_range {
        let mut model = kmeans(features, k, config)?;
        if let Some(p) = &prev {
            if k > p.k && model.inertia > p.inertia {
                let mut init = p.centroids.clone();
                for i in farthest_rows(data, p, k - p.k) {
                    init.push(data[i]);
                }
                let grown = lloyd(data, init, config.max_iterations, config.tolerance);
                if grown.inertia < model.inertia {
                    model = ClusterModel {
                        k,
                        centroids: grown.centroids,
                        row_ids: features.row_ids.clone(),
                        assignments: grown.assignments,
                        inertia: grown.inertia,
                        iterations: grown.iterations,
                        seed: config.seed,
                        restarts: config.restarts,
                        inertia_trace: grown.trace,
                    };
                }
            }
        }
        let min_cluster_size = model
            .cluster_sizes()
            .into_iter()
            .min()
            .expect("k >= 1 clusters");
        rows.push(KSelectionRow {
            k,
            inertia: model.inertia,
            min_cluster_size,
            mean_silhouette: if k == 1 {
                None
            } else {
                mean_silhouette(data, &model.assignments, k)
            },
        });
        prev = Some(model);
    }
    Ok(rows)
}
