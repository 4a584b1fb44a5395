//! Cleaning rules that turn raw feed snapshots into the analysis dataset.
//!
//! Four independent predicates, applied in a fixed order but commuting on
//! the surviving set:
//!
//! 1. inactive vehicles: no reported heading
//! 2. depot pings: within a configured radius of a depot or works site
//! 3. inactive routes: missing next stop or destination
//! 4. unserviced entries: service name absent/empty/"N/A", or destination
//!    literally marking the vehicle not in service
//!
//! Every run yields a [`CleanseReport`] whose counts always satisfy
//! `output = input - sum(removals)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_m;
use crate::ingest::VehicleObservation;

/// Default removal radius around a depot center, in metres. An engineering
/// default, deliberately generous for a parked-vehicle yard.
pub const DEFAULT_DEPOT_RADIUS_M: f64 = 250.0;

/// A circular exclusion zone around a depot or maintenance site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepotZone {
    pub name: String,
    pub center_latitude: f64,
    pub center_longitude: f64,
    pub radius_m: f64,
}

impl DepotZone {
    pub fn new(
        name: impl Into<String>,
        center_latitude: f64,
        center_longitude: f64,
        radius_m: f64,
    ) -> Result<DepotZone> {
        let zone = DepotZone {
            name: name.into(),
            center_latitude,
            center_longitude,
            radius_m,
        };
        zone.validate()?;
        Ok(zone)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0) || !self.radius_m.is_finite() {
            return Err(Error::Config(format!(
                "depot zone {:?} needs a positive radius, got {}",
                self.name, self.radius_m
            )));
        }
        if !(-90.0..=90.0).contains(&self.center_latitude)
            || !(-180.0..=180.0).contains(&self.center_longitude)
        {
            return Err(Error::Config(format!(
                "depot zone {:?} center ({}, {}) outside WGS84 bounds",
                self.name, self.center_latitude, self.center_longitude
            )));
        }
        Ok(())
    }

    pub fn contains(&self, latitude: f64, longitude: f64) -> bool {
        haversine_m(self.center_latitude, self.center_longitude, latitude, longitude)
            <= self.radius_m
    }
}

/// The nine default exclusion zones for Edinburgh: the seven bus garages,
/// the tram depot at Gogar, and the Seafield maintenance centre. Site
/// coordinates are approximate yard centers; pair them with a radius wide
/// enough to blanket the site.
pub fn default_edinburgh_zones() -> Vec<DepotZone> {
    [
        ("Annandale Street garage", 55.9615, -3.1832),
        ("Longstone garage", 55.9172, -3.2608),
        ("Marine garage", 55.9593, -3.1279),
        ("Musselburgh garage", 55.9377, -3.0518),
        ("Newbridge garage", 55.9330, -3.3985),
        ("Shrubhill works", 55.9640, -3.1822),
        ("Bankhead garage", 55.9262, -3.2882),
        ("Gogar tram depot", 55.9402, -3.3167),
        ("Seafield maintenance centre", 55.9605, -3.1437),
    ]
    .into_iter()
    .map(|(name, lat, lon)| DepotZone {
        name: name.to_owned(),
        center_latitude: lat,
        center_longitude: lon,
        radius_m: DEFAULT_DEPOT_RADIUS_M,
    })
    .collect()
}

/// Per-rule audit counts for one cleanse run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanseReport {
    pub input_count: usize,
    pub removed_null_heading: usize,
    pub removed_depot: usize,
    pub removed_inactive_route: usize,
    pub removed_unserviced: usize,
    pub output_count: usize,
}

impl CleanseReport {
    pub fn removed_total(&self) -> usize {
        self.removed_null_heading
            + self.removed_depot
            + self.removed_inactive_route
            + self.removed_unserviced
    }
}

fn split_by<F>(observations: Vec<VehicleObservation>, keep: F) -> (Vec<VehicleObservation>, usize)
where
    F: Fn(&VehicleObservation) -> bool,
{
    let before = observations.len();
    let kept: Vec<VehicleObservation> = observations.into_iter().filter(|o| keep(o)).collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Drop observations with no reported heading (inactive vehicles).
pub fn filter_inactive_vehicles(
    observations: Vec<VehicleObservation>,
) -> (Vec<VehicleObservation>, usize) {
    split_by(observations, |o| o.heading.is_some())
}

/// Drop observations within any zone (inclusive boundary).
pub fn filter_depots(
    observations: Vec<VehicleObservation>,
    zones: &[DepotZone],
) -> Result<(Vec<VehicleObservation>, usize)> {
    if zones.is_empty() {
        return Err(Error::Config(
            "depot filtering needs at least one zone (omit the filter to disable it)".into(),
        ));
    }
    for zone in zones {
        zone.validate()?;
    }
    Ok(split_by(observations, |o| {
        !zones.iter().any(|z| z.contains(o.latitude, o.longitude))
    }))
}

/// Drop observations missing their next stop or destination (inactive
/// routes). Survivors have both.
pub fn filter_inactive_routes(
    observations: Vec<VehicleObservation>,
) -> (Vec<VehicleObservation>, usize) {
    split_by(observations, |o| {
        o.next_stop.is_some() && o.destination.is_some()
    })
}

fn is_serviced(observation: &VehicleObservation) -> bool {
    let named = matches!(
        observation.service_name.as_deref(),
        Some(name) if !name.is_empty() && !name.eq_ignore_ascii_case("N/A")
    );
    let in_service = !matches!(
        observation.destination.as_deref(),
        Some(dest) if dest.eq_ignore_ascii_case("Not in Service")
    );
    named && in_service
}

/// Drop observations with no usable service name, plus those whose
/// destination text marks the vehicle as not in service.
pub fn filter_unserviced(
    observations: Vec<VehicleObservation>,
) -> (Vec<VehicleObservation>, usize) {
    split_by(observations, is_serviced)
}

/// Apply all four rules and report per-rule counts.
pub fn cleanse(
    observations: Vec<VehicleObservation>,
    zones: &[DepotZone],
) -> Result<(Vec<VehicleObservation>, CleanseReport)> {
    let (mask, report) = cleanse_mask(&observations, zones)?;
    let kept = observations
        .into_iter()
        .zip(&mask)
        .filter_map(|(o, &keep)| keep.then_some(o))
        .collect();
    Ok((kept, report))
}

/// Like [`cleanse`], but returns a keep-mask parallel to the input instead
/// of the surviving rows, so callers can carry sidecar data (store records,
/// say) through the filter.
pub fn cleanse_mask(
    observations: &[VehicleObservation],
    zones: &[DepotZone],
) -> Result<(Vec<bool>, CleanseReport)> {
    if zones.is_empty() {
        return Err(Error::Config(
            "depot filtering needs at least one zone (omit the filter to disable it)".into(),
        ));
    }
    for zone in zones {
        zone.validate()?;
    }

    let mut alive = vec![true; observations.len()];
    let mark = |alive: &mut Vec<bool>, keep: &dyn Fn(&VehicleObservation) -> bool| {
        let mut removed = 0;
        for (slot, o) in alive.iter_mut().zip(observations) {
            if *slot && !keep(o) {
                *slot = false;
                removed += 1;
            }
        }
        removed
    };

    let removed_null_heading = mark(&mut alive, &|o| o.heading.is_some());
    let removed_depot = mark(&mut alive, &|o| {
        !zones.iter().any(|z| z.contains(o.latitude, o.longitude))
    });
    let removed_inactive_route = mark(&mut alive, &|o| {
        o.next_stop.is_some() && o.destination.is_some()
    });
    let removed_unserviced = mark(&mut alive, &is_serviced);

    let report = CleanseReport {
        input_count: observations.len(),
        removed_null_heading,
        removed_depot,
        removed_inactive_route,
        removed_unserviced,
        output_count: alive.iter().filter(|&&keep| keep).count(),
    };
    debug_assert_eq!(
        report.output_count,
        report.input_count - report.removed_total()
    );
    Ok((alive, report))
}

#[derive(Deserialize)]
struct GeoJsonDocument {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<GeoJsonFeature>,
}

#[derive(Deserialize)]
struct GeoJsonFeature {
    #[serde(rename = "type")]
    kind: String,
    geometry: GeoJsonGeometry,
    #[serde(default)]
    properties: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct GeoJsonGeometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<f64>,
}

/// Load zones from a GeoJSON FeatureCollection of Points. Each feature may
/// carry `name` and `radius` (metres) properties; missing ones fall back to
/// a positional name and [`DEFAULT_DEPOT_RADIUS_M`].
pub fn load_depot_zones(path: impl AsRef<Path>) -> Result<Vec<DepotZone>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: GeoJsonDocument =
        serde_json::from_str(&text).map_err(|e| crate::ingest::parse_error(&text, &e))?;
    if doc.kind != "FeatureCollection" {
        return Err(Error::Config(format!(
            "{}: expected a FeatureCollection, got {:?}",
            path.display(),
            doc.kind
        )));
    }
    doc.features
        .iter()
        .enumerate()
        .map(|(i, feature)| {
            if feature.kind != "Feature" {
                return Err(Error::Config(format!(
                    "{}: features[{i}] has type {:?}, expected \"Feature\"",
                    path.display(),
                    feature.kind
                )));
            }
            if feature.geometry.kind != "Point" {
                return Err(Error::Config(format!(
                    "{}: features[{i}] geometry is {:?}, expected \"Point\"",
                    path.display(),
                    feature.geometry.kind
                )));
            }
            let [longitude, latitude] = feature.geometry.coordinates[..] else {
                return Err(Error::Config(format!(
                    "{}: features[{i}] needs [longitude, latitude] coordinates",
                    path.display()
                )));
            };
            let name = feature
                .properties
                .get("name")
                .and_then(|v| v.as_str())
                .map(str::to_owned)
                .unwrap_or_else(|| format!("zone-{i}"));
            let radius_m = match feature.properties.get("radius") {
                None => DEFAULT_DEPOT_RADIUS_M,
                Some(v) => v.as_f64().ok_or_else(|| {
                    Error::Config(format!(
                        "{}: features[{i}] radius must be a number, got {v}",
                        path.display()
                    ))
                })?,
            };
            DepotZone::new(name, latitude, longitude, radius_m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::EARTH_RADIUS_M;
    use proptest::prelude::*;

    fn obs(
        heading: Option<f64>,
        destination: Option<&str>,
        next_stop: Option<&str>,
        service_name: Option<&str>,
    ) -> VehicleObservation {
        VehicleObservation {
            vehicle_id: "v".into(),
            service_name: service_name.map(Into::into),
            latitude: 55.95,
            longitude: -3.19,
            heading,
            destination: destination.map(Into::into),
            next_stop: next_stop.map(Into::into),
            timestamp: 1,
        }
    }

    fn active(vehicle_id: &str) -> VehicleObservation {
        VehicleObservation {
            vehicle_id: vehicle_id.into(),
            service_name: Some("26".into()),
            latitude: 55.95,
            longitude: -3.19,
            heading: Some(90.0),
            destination: Some("Clerwood".into()),
            next_stop: Some("S1".into()),
            timestamp: 1,
        }
    }

    #[test]
    fn heading_filter_counts_and_preserves_order() {
        let mut input = Vec::new();
        for i in 0..10 {
            let mut o = active(&format!("v{i}"));
            if i % 3 == 0 {
                o.heading = None; // v0, v3, v6, v9: 4 removed
            }
            input.push(o);
        }
        let (kept, removed) = filter_inactive_vehicles(input);
        assert_eq!(removed, 4);
        assert_eq!(kept.len(), 6);
        assert_eq!(
            kept.iter().map(|o| o.vehicle_id.as_str()).collect::<Vec<_>>(),
            vec!["v1", "v2", "v4", "v5", "v7", "v8"]
        );

        let all_present: Vec<_> = (0..5).map(|i| active(&format!("a{i}"))).collect();
        let (kept, removed) = filter_inactive_vehicles(all_present.clone());
        assert_eq!(removed, 0);
        assert_eq!(kept, all_present);
    }

    #[test]
    fn depot_filter_geometry() {
        let zone = DepotZone::new("Test yard", 55.95, -3.19, 250.0).unwrap();
        let at_center = active("center");
        let mut far = active("far");
        far.latitude = 55.95 + 10_000.0 / EARTH_RADIUS_M * 180.0 / std::f64::consts::PI;
        let (kept, removed) = filter_depots(vec![at_center, far], &[zone]).unwrap();
        assert_eq!(removed, 1);
        assert_eq!(kept[0].vehicle_id, "far");
    }

    #[test]
    fn depot_boundary_is_inclusive() {
        // Place a point due north, then set the zone radius to the exact
        // haversine distance the filter itself will compute: d <= r becomes
        // d <= d, so the boundary point must be removed. Shrinking the
        // radius by one ulp retains it.
        let (clat, clon) = (55.95, -3.19);
        let mut boundary = active("edge");
        boundary.latitude = clat + (250.0 / EARTH_RADIUS_M).to_degrees();
        boundary.longitude = clon;
        let exact = haversine_m(clat, clon, boundary.latitude, boundary.longitude);
        let zone = DepotZone::new("yard", clat, clon, exact).unwrap();
        let (_, removed) = filter_depots(vec![boundary.clone()], &[zone]).unwrap();
        assert_eq!(removed, 1);

        let inside = DepotZone::new("yard", clat, clon, exact - exact * 1e-15).unwrap();
        let (kept, removed) = filter_depots(vec![boundary], &[inside]).unwrap();
        assert_eq!(removed, 0);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn depot_filter_requires_valid_zones() {
        assert!(filter_depots(vec![active("v")], &[]).is_err());
        let bad = DepotZone {
            name: "bad".into(),
            center_latitude: 55.9,
            center_longitude: -3.2,
            radius_m: 0.0,
        };
        assert!(filter_depots(vec![active("v")], &[bad]).is_err());
        assert!(DepotZone::new("x", 95.0, 0.0, 100.0).is_err());
    }

    #[test]
    fn route_filter_enumerates_presence_combinations() {
        let input = vec![
            obs(Some(0.0), Some("d"), Some("s"), Some("26")), // both: kept
            obs(Some(0.0), Some("d"), None, Some("26")),      // dest only: removed
            obs(Some(0.0), None, Some("s"), Some("26")),      // stop only: removed
            obs(Some(0.0), None, None, Some("26")),           // neither: removed
            obs(Some(0.0), Some("d2"), Some("s2"), Some("26")), // both: kept
            obs(Some(0.0), None, Some("s3"), Some("26")),     // stop only: removed
        ];
        let (kept, removed) = filter_inactive_routes(input);
        assert_eq!(removed, 4);
        assert_eq!(kept.len(), 2);
        assert!(kept
            .iter()
            .all(|o| o.destination.is_some() && o.next_stop.is_some()));
    }

    #[test]
    fn unserviced_filter_rules() {
        let cases = vec![
            (obs(None, Some("d"), None, Some("26")), true),
            (obs(None, Some("d"), None, Some("N/A")), false),
            (obs(None, Some("d"), None, Some("n/a")), false),
            (obs(None, Some("d"), None, Some("")), false),
            (obs(None, Some("d"), None, None), false),
            (obs(None, Some("Not in Service"), None, Some("26")), false),
            (obs(None, Some("NOT IN SERVICE"), None, Some("26")), false),
            (obs(None, None, None, Some("X29")), true),
        ];
        for (observation, expect_kept) in cases {
            let label = format!(
                "service={:?} destination={:?}",
                observation.service_name, observation.destination
            );
            let (kept, _) = filter_unserviced(vec![observation]);
            assert_eq!(kept.len() == 1, expect_kept, "{label}");
        }
    }

    fn test_zone() -> DepotZone {
        DepotZone::new("yard", 55.90, -3.10, 250.0).unwrap()
    }

    prop_compose! {
        fn arb_dirty_observation()(
            heading in proptest::option::of(0.0f64..360.0),
            destination in proptest::option::of(prop_oneof![
                Just("Ocean Terminal".to_owned()),
                Just("Not in Service".to_owned()),
            ]),
            next_stop in proptest::option::of(Just("S1".to_owned())),
            service_name in proptest::option::of(prop_oneof![
                Just("26".to_owned()),
                Just("N/A".to_owned()),
                Just(String::new()),
            ]),
            near_depot in proptest::bool::ANY,
            seq in 0u32..1000,
        ) -> VehicleObservation {
            VehicleObservation {
                vehicle_id: format!("v{seq}"),
                service_name,
                latitude: if near_depot { 55.90 } else { 55.95 },
                longitude: if near_depot { -3.10 } else { -3.19 },
                heading,
                destination,
                next_stop,
                timestamp: 1 + seq as i64,
            }
        }
    }

    proptest! {
        #[test]
        fn filters_commute_on_the_surviving_set(
            input in proptest::collection::vec(arb_dirty_observation(), 0..40)
        ) {
            let zones = vec![test_zone()];
            let forward = cleanse(input.clone(), &zones).unwrap().0;

            // Reverse order of application.
            let (step, _) = filter_unserviced(input.clone());
            let (step, _) = filter_inactive_routes(step);
            let (step, _) = filter_depots(step, &zones).unwrap();
            let (reversed, _) = filter_inactive_vehicles(step);
            prop_assert_eq!(&forward, &reversed);

            // A third interleaving.
            let (step, _) = filter_inactive_routes(input.clone());
            let (step, _) = filter_inactive_vehicles(step);
            let (step, _) = filter_unserviced(step);
            let (mixed, _) = filter_depots(step, &zones).unwrap();
            prop_assert_eq!(&forward, &mixed);
        }

        #[test]
        fn mask_agrees_with_the_sequential_filter_chain(
            input in proptest::collection::vec(arb_dirty_observation(), 0..40)
        ) {
            let zones = vec![test_zone()];
            let (mask, mask_report) = cleanse_mask(&input, &zones).unwrap();
            prop_assert_eq!(mask.len(), input.len());

            let total = input.len();
            let (step, removed_null_heading) = filter_inactive_vehicles(input.clone());
            let (step, removed_depot) = filter_depots(step, &zones).unwrap();
            let (step, removed_inactive_route) = filter_inactive_routes(step);
            let (chained, removed_unserviced) = filter_unserviced(step);

            let report = CleanseReport {
                input_count: total,
                removed_null_heading,
                removed_depot,
                removed_inactive_route,
                removed_unserviced,
                output_count: chained.len(),
            };
            prop_assert_eq!(mask_report, report);

            let masked: Vec<VehicleObservation> = input
                .iter()
                .zip(&mask)
                .filter_map(|(o, &keep)| keep.then(|| o.clone()))
                .collect();
            prop_assert_eq!(masked, chained);
        }

        #[test]
        fn report_arithmetic_and_idempotence(
            input in proptest::collection::vec(arb_dirty_observation(), 0..40)
        ) {
            let zones = vec![test_zone()];
            let (clean, report) = cleanse(input.clone(), &zones).unwrap();
            prop_assert_eq!(report.input_count, input.len());
            prop_assert_eq!(report.output_count, clean.len());
            prop_assert_eq!(
                report.output_count,
                report.input_count - report.removed_total()
            );

            let (again, second) = cleanse(clean.clone(), &zones).unwrap();
            prop_assert_eq!(again, clean);
            prop_assert_eq!(second.removed_total(), 0);
        }
    }

    #[test]
    fn default_zones_are_nine_valid_sites() {
        let zones = default_edinburgh_zones();
        assert_eq!(zones.len(), 9);
        let mut names: Vec<&str> = zones.iter().map(|z| z.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 9, "zone names must be distinct");
        for zone in &zones {
            zone.validate().unwrap();
            assert_eq!(zone.radius_m, DEFAULT_DEPOT_RADIUS_M);
            assert!((55.8..56.1).contains(&zone.center_latitude));
            assert!((-3.5..-2.9).contains(&zone.center_longitude));
        }
    }

    #[test]
    fn geojson_zone_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depots.geojson");
        std::fs::write(
            &path,
            r#"{
              "type": "FeatureCollection",
              "features": [
                {"type": "Feature",
                 "geometry": {"type": "Point", "coordinates": [-3.1832, 55.9615]},
                 "properties": {"name": "Annandale Street garage", "radius": 300.0}},
                {"type": "Feature",
                 "geometry": {"type": "Point", "coordinates": [-3.3167, 55.9402]},
                 "properties": {}}
              ]
            }"#,
        )
        .unwrap();
        let zones = load_depot_zones(&path).unwrap();
        assert_eq!(zones.len(), 2);
        assert_eq!(zones[0].name, "Annandale Street garage");
        assert_eq!(zones[0].radius_m, 300.0);
        assert_eq!(zones[0].center_latitude, 55.9615);
        assert_eq!(zones[1].name, "zone-1");
        assert_eq!(zones[1].radius_m, DEFAULT_DEPOT_RADIUS_M);

        std::fs::write(&path, r#"{"type": "FeatureCollection", "features": [
            {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [1.0, 2.0]}}
        ]}"#).unwrap();
        assert!(matches!(load_depot_zones(&path), Err(Error::Config(_))));

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_depot_zones(&path), Err(Error::Parse { .. })));
    }
}
