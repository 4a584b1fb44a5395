//! Usage accumulation: nearest-stop assignment and service frequencies.
//!
//! Each cleansed observation is attributed to its nearest stop, and the
//! per-stop totals become the usage intensity that weights the density
//! estimate and feeds the clustering features. Assignment has no distance
//! cutoff by default: a vehicle always has some nearest stop. A cutoff can
//! be supplied where a feed strays far outside the stop network.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Projection, StopIndex};
use crate::ingest::{Stop, VehicleObservation};

/// Cumulative observation count assigned to one stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopUsage {
    pub stop_id: String,
    pub vehicle_count: u64,
}

/// Result of an assignment run. `usage` lists every stop exactly once, in
/// stop-set order, zero counts included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentOutcome {
    pub usage: Vec<StopUsage>,
    pub assigned: usize,
    /// Observations farther than the cutoff from every stop.
    pub skipped_beyond_max: usize,
}

impl AssignmentOutcome {
    pub fn total_count(&self) -> u64 {
        self.usage.iter().map(|u| u.vehicle_count).sum()
    }
}

/// Assign each observation to its nearest stop (no distance cutoff).
pub fn assign_vehicles_to_stops(
    observations: &[VehicleObservation],
    stops: &[Stop],
) -> Result<Vec<StopUsage>> {
    Ok(assign_with_max_distance(observations, stops, None)?.usage)
}

/// Assign with an optional cutoff: observations whose nearest stop is
/// farther than `max_distance_m` are skipped and counted separately.
///
/// Exact-tie assignments go to the lexicographically smallest stop id, so
/// totals are independent of stop-set order.
pub fn assign_with_max_distance(
    observations: &[VehicleObservation],
    stops: &[Stop],
    max_distance_m: Option<f64>,
) -> Result<AssignmentOutcome> {
    if stops.is_empty() {
        return Err(Error::Domain(
            "assignment needs a non-empty stop set".into(),
        ));
    }
    if let Some(max) = max_distance_m {
        if !(max > 0.0) {
            return Err(Error::Config(format!(
                "max assignment distance must be positive, got {max}"
            )));
        }
    }
    let projection = Projection::centered_on(stops.iter().map(|s| (s.latitude, s.longitude)))?;
    let triples: Vec<(&str, f64, f64)> = stops
        .iter()
        .map(|s| (s.stop_id.as_str(), s.latitude, s.longitude))
        .collect();
    let index = StopIndex::build(projection, &triples)?;

    let mut counts: HashMap<&str, u64> = HashMap::with_capacity(stops.len());
    let mut assigned = 0usize;
    let mut skipped = 0usize;
    for observation in observations {
        let (stop_id, distance_m) = index.nearest(observation.latitude, observation.longitude)?;
        if max_distance_m.is_some_and(|max| distance_m > max) {
            skipped += 1;
            continue;
        }
        // The id borrowed from the index lives as long as it does; re-borrow
        // from the stop set to keep the map keyed on caller data.
        *counts.entry(stop_id).or_insert(0) += 1;
        assigned += 1;
    }
    let counts: HashMap<String, u64> = counts
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
    Ok(AssignmentOutcome {
        usage: stops
            .iter()
            .map(|s| StopUsage {
                stop_id: s.stop_id.clone(),
                vehicle_count: counts.get(&s.stop_id).copied().unwrap_or(0),
            })
            .collect(),
        assigned,
        skipped_beyond_max: skipped,
    })
}

/// One row of the service frequency table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCount {
    pub service_name: String,
    pub count: u64,
}

/// Count observations per service, sorted by count descending then service
/// name ascending (plain string order: "16" sorts before "3"), truncated to
/// `top_k`. Observations without a service name are ignored; feed them
/// through the cleanse rules first.
pub fn service_frequency_table(
    observations: &[VehicleObservation],
    top_k: usize,
) -> Vec<ServiceCount> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for observation in observations {
        if let Some(name) = observation.service_name.as_deref() {
            *counts.entry(name).or_insert(0) += 1;
        }
    }
    let mut table: Vec<ServiceCount> = counts
        .into_iter()
        .map(|(service_name, count)| ServiceCount {
            service_name: service_name.to_owned(),
            count,
        })
        .collect();
    table.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.service_name.cmp(&b.service_name))
    });
    table.truncate(top_k);
    table
}
