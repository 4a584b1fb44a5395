//! Deterministic synthetic fixtures: a small labeled city for exercising
//! every analysis stage end to end.
//!
//! [`synthetic_city`] lays out three stop clumps with distinct usage levels
//! (a quiet western village, a mid-activity corridor, and a dense harbour
//! hub), then synthesizes the vehicle pings that would produce exactly those
//! usage counts, plus a known number of dirty rows per cleaning rule. The
//! fixture carries its own ground truth: per-stop clump labels, the exact
//! expected cleanse report, the expected usage table, and the hub location,
//! so tests and examples can assert real spatial conclusions against it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::cleanse::{CleanseReport, DepotZone};
use crate::error::{Error, Result};
use crate::geo::EARTH_RADIUS_M;
use crate::ingest::{SnapshotStore, Stop, VehicleObservation};

/// Everything a pipeline run needs, with the answers attached.
#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub stops: Vec<Stop>,
    /// Clump index per stop, parallel to `stops`: 0 village, 1 corridor,
    /// 2 harbour.
    pub truth_labels: Vec<usize>,
    /// Clean and dirty observations, shuffled.
    pub observations: Vec<VehicleObservation>,
    pub zones: Vec<DepotZone>,
    /// Vehicle count each stop receives after cleansing and assignment.
    pub expected_usage: BTreeMap<String, u64>,
    pub expected_cleanse: CleanseReport,
    /// The single busiest stop, at the harbour clump's exact center.
    pub hub_stop_id: String,
    pub hub_latitude: f64,
    pub hub_longitude: f64,
}

struct Clump {
    id_prefix: &'static str,
    center_lat: f64,
    center_lon: f64,
    ring_radius_m: f64,
    ring_stops: usize,
    service: &'static str,
}

const VILLAGE: Clump = Clump {
    id_prefix: "vil",
    center_lat: 55.9300,
    center_lon: -3.3000,
    ring_radius_m: 400.0,
    ring_stops: 10,
    service: "63",
};
const CORRIDOR: Clump = Clump {
    id_prefix: "cor",
    center_lat: 55.9800,
    center_lon: -3.1500,
    ring_radius_m: 350.0,
    ring_stops: 14,
    service: "16",
};
const HARBOUR: Clump = Clump {
    id_prefix: "har",
    center_lat: 55.9050,
    center_lon: -3.1050,
    ring_radius_m: 160.0,
    ring_stops: 11,
    service: "1",
};

const DEPOT_LAT: f64 = 55.9600;
const DEPOT_LON: f64 = -3.2200;
const BASE_TIMESTAMP: i64 = 1_700_000_000;

fn offset_deg(lat: f64, east_m: f64, north_m: f64) -> (f64, f64) {
    let dlat = north_m / EARTH_RADIUS_M * 180.0 / std::f64::consts::PI;
    let dlon = east_m / (EARTH_RADIUS_M * lat.to_radians().cos()) * 180.0 / std::f64::consts::PI;
    (dlat, dlon)
}

fn ring_position(clump: &Clump, index: usize, angle_jitter: f64) -> (f64, f64) {
    let theta = TAU * index as f64 / clump.ring_stops as f64 + angle_jitter;
    let (dlat, dlon) = offset_deg(
        clump.center_lat,
        clump.ring_radius_m * theta.sin(),
        clump.ring_radius_m * theta.cos(),
    );
    (clump.center_lat + dlat, clump.center_lon + dlon)
}

/// Build the labeled city. Every detail is a pure function of `seed`.
pub fn synthetic_city(seed: u64) -> SyntheticCity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stops = Vec::new();
    let mut truth_labels = Vec::new();
    let mut expected_usage = BTreeMap::new();
    let mut clean = Vec::new();
    let mut vehicle_serial = 0usize;

    // Per-stop usage levels: ~5 at the village, ~38 on the corridor,
    // ~150 at the harbour, 170 at the hub itself.
    let mut add_stop = |stops: &mut Vec<Stop>,
                        truth: &mut Vec<usize>,
                        usage: &mut BTreeMap<String, u64>,
                        clean: &mut Vec<VehicleObservation>,
                        rng: &mut ChaCha8Rng,
                        label: usize,
                        clump: &Clump,
                        stop_id: String,
                        lat: f64,
                        lon: f64,
                        count: u64| {
        stops.push(Stop {
            stop_id: stop_id.clone(),
            name: format!("Stop {stop_id}"),
            latitude: lat,
            longitude: lon,
        });
        truth.push(label);
        usage.insert(stop_id.clone(), count);
        for _ in 0..count {
            // Pings jitter within ~25 m of the stop, well under half the
            // 90 m minimum stop spacing, so nearest-stop assignment is
            // unambiguous.
            let (dlat, dlon) = offset_deg(
                lat,
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
            );
            vehicle_serial += 1;
            clean.push(VehicleObservation {
                vehicle_id: format!("bus-{vehicle_serial:05}"),
                service_name: Some(clump.service.to_string()),
                latitude: lat + dlat,
                longitude: lon + dlon,
                heading: Some(rng.random_range(0.0..360.0)),
                destination: Some("City Centre".to_string()),
                next_stop: Some(format!("Stop {stop_id}")),
                timestamp: BASE_TIMESTAMP + vehicle_serial as i64,
            });
        }
    };

    for (label, clump) in [(0usize, &VILLAGE), (1, &CORRIDOR), (2, &HARBOUR)] {
        for i in 0..clump.ring_stops {
            let jitter = rng.random_range(-0.02..0.02);
            let (lat, lon) = ring_position(clump, i, jitter);
            let count = match label {
                0 => 4 + (i as u64 % 3),
                1 => 35 + (i as u64 % 7),
                _ => 140 + (i as u64 % 5) * 5,
            };
            add_stop(
                &mut stops,
                &mut truth_labels,
                &mut expected_usage,
                &mut clean,
                &mut rng,
                label,
                clump,
                format!("{}-{i:02}", clump.id_prefix),
                lat,
                lon,
                count,
            );
        }
    }
    // The hub: heaviest stop, at the harbour ring's exact center.
    let hub_stop_id = "har-hub".to_string();
    add_stop(
        &mut stops,
        &mut truth_labels,
        &mut expected_usage,
        &mut clean,
        &mut rng,
        2,
        &HARBOUR,
        hub_stop_id.clone(),
        HARBOUR.center_lat,
        HARBOUR.center_lon,
        170,
    );

    let clean_count = clean.len();
    let mut observations = clean;
    let mut dirty_serial = 0usize;
    let mut dirty = |service: Option<&str>,
                     lat: f64,
                     lon: f64,
                     heading: Option<f64>,
                     destination: Option<&str>,
                     next_stop: Option<&str>| {
        dirty_serial += 1;
        VehicleObservation {
            vehicle_id: format!("odd-{dirty_serial:03}"),
            service_name: service.map(Into::into),
            latitude: lat,
            longitude: lon,
            heading,
            destination: destination.map(Into::into),
            next_stop: next_stop.map(Into::into),
            timestamp: BASE_TIMESTAMP - 10_000 + dirty_serial as i64,
        }
    };

    // Exactly one rule violated per dirty row, so the per-rule removal
    // counts below hold regardless of filter order.
    for i in 0..7 {
        // Stationary pings: no heading.
        observations.push(dirty(
            Some("16"),
            CORRIDOR.center_lat + 0.001 * i as f64,
            CORRIDOR.center_lon,
            None,
            Some("City Centre"),
            Some("Somewhere"),
        ));
    }
    for _ in 0..5 {
        // Parked at the depot.
        observations.push(dirty(
            Some("1"),
            DEPOT_LAT,
            DEPOT_LON,
            Some(90.0),
            Some("City Centre"),
            Some("Somewhere"),
        ));
    }
    for i in 0..4 {
        // No next stop: not on an active route.
        observations.push(dirty(
            Some("63"),
            VILLAGE.center_lat + 0.001 * i as f64,
            VILLAGE.center_lon,
            Some(10.0),
            Some("City Centre"),
            None,
        ));
    }
    for i in 0..3 {
        // No destination: same rule, other field.
        observations.push(dirty(
            Some("63"),
            VILLAGE.center_lat,
            VILLAGE.center_lon + 0.001 * i as f64,
            Some(200.0),
            None,
            Some("Somewhere"),
        ));
    }
    for (service, destination) in [
        (None, Some("City Centre")),
        (Some("N/A"), Some("City Centre")),
        (Some("N/A"), Some("Ocean Terminal")),
        (Some("n/a"), Some("City Centre")),
        (Some("22"), Some("Not in Service")),
        (Some("22"), Some("NOT IN SERVICE")),
    ] {
        observations.push(dirty(
            service,
            CORRIDOR.center_lat,
            CORRIDOR.center_lon + 0.002,
            Some(45.0),
            destination,
            Some("Somewhere"),
        ));
    }

    let expected_cleanse = CleanseReport {
        input_count: observations.len(),
        removed_null_heading: 7,
        removed_depot: 5,
        removed_inactive_route: 7,
        removed_unserviced: 6,
        output_count: clean_count,
    };
    observations.shuffle(&mut rng);

    SyntheticCity {
        stops,
        truth_labels,
        observations,
        zones: vec![
            DepotZone::new("Fixture depot", DEPOT_LAT, DEPOT_LON, 250.0)
                .expect("fixture zone is valid"),
        ],
        expected_usage,
        expected_cleanse,
        hub_stop_id,
        hub_latitude: HARBOUR.center_lat,
        hub_longitude: HARBOUR.center_lon,
    }
}

impl SyntheticCity {
    /// Total clean observations, which equals the usage-table mass.
    pub fn clean_observation_count(&self) -> usize {
        self.expected_cleanse.output_count
    }

    /// Write the observations into a snapshot store at `path` (plus the
    /// stops sidecar), batched as a poller would have appended them.
    pub fn write_store(&self, path: &Path) -> Result<SnapshotStore> {
        let store = SnapshotStore::open(path)?;
        for (i, batch) in self.observations.chunks(500).enumerate() {
            store.append_batch(
                &format!("synthetic-{i:04}"),
                BASE_TIMESTAMP + i as i64,
                batch,
            )?;
        }
        store.write_stops(&self.stops, BASE_TIMESTAMP)?;
        Ok(store)
    }

    /// Write the depot zones as a GeoJSON FeatureCollection `load_depot_zones`
    /// can read back.
    pub fn write_zones_geojson(&self, path: &Path) -> Result<()> {
        let features: Vec<serde_json::Value> = self
            .zones
            .iter()
            .map(|z| {
                json!({
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        "coordinates": [z.center_longitude, z.center_latitude],
                    },
                    "properties": { "name": z.name, "radius": z.radius_m },
                })
            })
            .collect();
        let doc = json!({ "type": "FeatureCollection", "features": features });
        std::fs::write(path, serde_json::to_vec_pretty(&doc).map_err(|e| {
            Error::Domain(format!("could not encode zones: {e}"))
        })?)
        .map_err(|e| Error::io(path.to_path_buf(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleanse::{cleanse, load_depot_zones};
    use crate::cluster::{adjusted_rand_index, cluster_stops, KmeansConfig};
    use crate::geo::haversine_m;
    use crate::nna::{run_nna_on_stops, NnaConfig, SpatialPattern};
    use crate::usage::assign_vehicles_to_stops;

    #[test]
    fn fixture_is_deterministic_and_well_formed() {
        let a = synthetic_city(7);
        let b = synthetic_city(7);
        assert_eq!(a.stops, b.stops);
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.stops.len(), 36);
        assert_eq!(a.truth_labels.len(), 36);
        for s in &a.stops {
            s.validate().unwrap();
        }
        for o in &a.observations {
            o.validate().unwrap();
        }
        // Stops are far enough apart that a 35 m ping jitter cannot change
        // its nearest stop.
        for (i, s) in a.stops.iter().enumerate() {
            for t in &a.stops[i + 1..] {
                let d = haversine_m(s.latitude, s.longitude, t.latitude, t.longitude);
                assert!(d > 85.0, "{} and {} are {d:.1} m apart", s.stop_id, t.stop_id);
            }
        }
        let different = synthetic_city(8);
        assert_ne!(a.observations, different.observations);
    }

    #[test]
    fn cleanse_counts_match_the_built_in_answer() {
        let city = synthetic_city(7);
        let (kept, report) = cleanse(city.observations.clone(), &city.zones).unwrap();
        assert_eq!(report, city.expected_cleanse);
        assert_eq!(kept.len(), city.clean_observation_count());
        assert_eq!(
            report.input_count,
            report.output_count + report.removed_total()
        );
    }

    #[test]
    fn usage_matches_the_designed_counts() {
        let city = synthetic_city(7);
        let (kept, _) = cleanse(city.observations.clone(), &city.zones).unwrap();
        let usage = assign_vehicles_to_stops(&kept, &city.stops).unwrap();
        for u in &usage {
            assert_eq!(
                u.vehicle_count, city.expected_usage[&u.stop_id],
                "stop {}",
                u.stop_id
            );
        }
        let hub = usage.iter().max_by_key(|u| u.vehicle_count).unwrap();
        assert_eq!(hub.stop_id, city.hub_stop_id);
        assert_eq!(hub.vehicle_count, 170);
    }

    #[test]
    fn stop_pattern_reads_strongly_clustered() {
        let city = synthetic_city(7);
        let (result, _) = run_nna_on_stops(&city.stops, &NnaConfig::default()).unwrap();
        assert!(result.r < 0.8, "R = {}", result.r);
        assert_eq!(result.pattern, SpatialPattern::Clustered);
    }

    #[test]
    fn clustering_recovers_the_three_clumps() {
        let city = synthetic_city(7);
        let (kept, _) = cleanse(city.observations.clone(), &city.zones).unwrap();
        let usage = assign_vehicles_to_stops(&kept, &city.stops).unwrap();
        let (model, _, _) =
            cluster_stops(&city.stops, &usage, 3, &KmeansConfig::default()).unwrap();
        assert_eq!(
            adjusted_rand_index(&model.assignments, &city.truth_labels).unwrap(),
            1.0
        );
    }

    #[test]
    fn store_and_zone_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let city = synthetic_city(7);
        let store_path = dir.path().join("snapshots.ndjson");
        let store = city.write_store(&store_path).unwrap();
        let observations = store.read_observations().unwrap();
        assert_eq!(observations.len(), city.observations.len());
        let stops = store.read_stops().unwrap();
        assert_eq!(stops.stops, city.stops);

        let zones_path = dir.path().join("zones.geojson");
        city.write_zones_geojson(&zones_path).unwrap();
        let zones = load_depot_zones(&zones_path).unwrap();
        assert_eq!(zones.len(), 1);
        assert_eq!(zones[0].name, "Fixture depot");
        assert_eq!(zones[0].radius_m, 250.0);
        assert_eq!(zones[0].center_latitude, DEPOT_LAT);
    }
}
