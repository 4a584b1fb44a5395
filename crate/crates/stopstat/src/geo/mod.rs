//! Planar geometry over geographic points.
//!
//! Everything downstream of ingestion works in a local tangent plane: an
//! equirectangular projection centred on the study area turns (lat, lon)
//! into metre coordinates, and all distances, areas, and densities are
//! computed in that plane. [`haversine_m`] stays on the sphere and serves
//! as the accuracy oracle for the projection.

mod kdtree;

pub use kdtree::{dist_sq, KdTree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in metres (IUGG sphere).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Half-width in degrees of the band around the projection reference where
/// the flat-plane approximation is considered trustworthy at city scale.
pub const PROJECTION_VALID_DEGREES: f64 = 2.0;

/// Below this many points, exhaustive scans beat tree construction and are
/// used instead. Both paths produce bit-identical results.
pub const EXHAUSTIVE_CUTOFF: usize = 256;

fn check_lat_lon(latitude: f64, longitude: f64) -> Result<()> {
    if !latitude.is_finite() || !(-90.0..=90.0).contains(&latitude) {
        return Err(Error::Domain(format!(
            "latitude {latitude} outside [-90, 90]"
        )));
    }
    if !longitude.is_finite() || !(-180.0..=180.0).contains(&longitude) {
        return Err(Error::Domain(format!(
            "longitude {longitude} outside [-180, 180]"
        )));
    }
    Ok(())
}

/// Great-circle distance in metres between two (lat, lon) pairs, degrees in.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let half_phi = (dphi / 2.0).sin();
    let half_lambda = (dlambda / 2.0).sin();
    let a = half_phi * half_phi + phi1.cos() * phi2.cos() * half_lambda * half_lambda;
    let c = 2.0 * a.sqrt().atan2((1.0 - a).sqrt());
    EARTH_RADIUS_M * c
}

/// A point in the local tangent plane, metres east (`x`) and north (`y`) of
/// the projection reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        ProjectedPoint { x, y }
    }

    pub fn distance(&self, other: &ProjectedPoint) -> f64 {
        dist_sq([self.x, self.y], [other.x, other.y]).sqrt()
    }
}

/// Local equirectangular projection about a fixed reference point.
///
/// `x = R * dlon * cos(lat_ref)`, `y = R * dlat` (angles in radians). Within
/// [`PROJECTION_VALID_DEGREES`] of the reference the distance error against
/// the great circle stays well under 0.1% at city scale; outside that band
/// points still project but a warning is logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub reference_latitude: f64,
    pub reference_longitude: f64,
}

impl Projection {
    pub fn new(reference_latitude: f64, reference_longitude: f64) -> Result<Self> {
        check_lat_lon(reference_latitude, reference_longitude)?;
        Ok(Projection {
            reference_latitude,
            reference_longitude,
        })
    }

    /// Reference at the arithmetic mean latitude/longitude of the input.
    pub fn centered_on<I>(coords: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut n = 0usize;
        let mut lat_sum = 0.0;
        let mut lon_sum = 0.0;
        for (lat, lon) in coords {
            check_lat_lon(lat, lon)?;
            lat_sum += lat;
            lon_sum += lon;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Domain(
                "cannot centre a projection on an empty point set".into(),
            ));
        }
        Projection::new(lat_sum / n as f64, lon_sum / n as f64)
    }

    pub fn project(&self, latitude: f64, longitude: f64) -> Result<ProjectedPoint> {
        check_lat_lon(latitude, longitude)?;
        if (latitude - self.reference_latitude).abs() > PROJECTION_VALID_DEGREES
            || (longitude - self.reference_longitude).abs() > PROJECTION_VALID_DEGREES
        {
            log::warn!(
                "point ({latitude}, {longitude}) is more than {PROJECTION_VALID_DEGREES} deg \
                 from the projection reference; planar distances degrade"
            );
        }
        let x = EARTH_RADIUS_M
            * (longitude - self.reference_longitude).to_radians()
            * self.reference_latitude.to_radians().cos();
        let y = EARTH_RADIUS_M * (latitude - self.reference_latitude).to_radians();
        Ok(ProjectedPoint { x, y })
    }

    pub fn unproject(&self, point: ProjectedPoint) -> (f64, f64) {
        let latitude = self.reference_latitude + (point.y / EARTH_RADIUS_M).to_degrees();
        let longitude = self.reference_longitude
            + (point.x / (EARTH_RADIUS_M * self.reference_latitude.to_radians().cos()))
                .to_degrees();
        (latitude, longitude)
    }
}

/// How the footprint of a point set is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaMethod {
    ConvexHull,
    BoundingBox,
}

impl std::str::FromStr for AreaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hull" | "convex_hull" | "convex-hull" => Ok(AreaMethod::ConvexHull),
            "bbox" | "bounding_box" | "bounding-box" => Ok(AreaMethod::BoundingBox),
            other => Err(Error::Config(format!(
                "unknown area method `{other}` (expected `hull` or `bbox`)"
            ))),
        }
    }
}

/// Footprint measurement of a projected point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyArea {
    pub method: AreaMethod,
    pub area_m2: f64,
    pub point_count: usize,
    /// `point_count / area_m2`, the intensity used by nearest-neighbour tests.
    pub density_per_m2: f64,
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, collinear
/// boundary points dropped. Fewer than three distinct extreme points yield
/// a hull that the area check downstream rejects.
pub fn convex_hull(points: &[ProjectedPoint]) -> Vec<ProjectedPoint> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts
            .into_iter()
            .map(|(x, y)| ProjectedPoint::new(x, y))
            .collect();
    }

    fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }

    fn chain<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &p in points {
            while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(p);
        }
        out
    }

    let mut lower = chain(pts.iter());
    let mut upper = chain(pts.iter().rev());
    // Each chain ends where the other starts; drop the duplicated endpoints.
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
        .into_iter()
        .map(|(x, y)| ProjectedPoint::new(x, y))
        .collect()
}

/// Shoelace area of a simple polygon given as an ordered vertex ring.
pub fn polygon_area_m2(ring: &[ProjectedPoint]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut twice_area = 0.0;
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        twice_area += a.x * b.y - b.x * a.y;
    }
    twice_area.abs() / 2.0
}

/// Measure the footprint of a point set and its resulting point density.
pub fn study_area(points: &[ProjectedPoint], method: AreaMethod) -> Result<StudyArea> {
    let area_m2 = match method {
        AreaMethod::ConvexHull => {
            if points.len() < 3 {
                return Err(Error::DegenerateGeometry(format!(
                    "convex hull needs at least 3 points, got {}",
                    points.len()
                )));
            }
            let hull = convex_hull(points);
            let area = polygon_area_m2(&hull);
            if area <= 0.0 {
                return Err(Error::DegenerateGeometry(
                    "all points are collinear; convex hull has zero area".into(),
                ));
            }
            area
        }
        AreaMethod::BoundingBox => {
            if points.is_empty() {
                return Err(Error::DegenerateGeometry(
                    "bounding box of an empty point set".into(),
                ));
            }
            let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in points {
                xmin = xmin.min(p.x);
                xmax = xmax.max(p.x);
                ymin = ymin.min(p.y);
                ymax = ymax.max(p.y);
            }
            let area = (xmax - xmin) * (ymax - ymin);
            if area <= 0.0 {
                return Err(Error::DegenerateGeometry(
                    "bounding box has zero area (points coincide or are axis-aligned)".into(),
                ));
            }
            area
        }
    };
    Ok(StudyArea {
        method,
        area_m2,
        point_count: points.len(),
        density_per_m2: points.len() as f64 / area_m2,
    })
}

/// Distance from each point to its nearest other point, in input order.
/// Duplicates yield zero entries. Errors if fewer than two points.
pub fn nearest_neighbor_distances(points: &[ProjectedPoint]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "nearest-neighbour distances need at least 2 points, got {}",
            points.len()
        )));
    }
    let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    if coords.len() < EXHAUSTIVE_CUTOFF {
        let mut out = Vec::with_capacity(coords.len());
        for i in 0..coords.len() {
            let mut best = f64::INFINITY;
            for j in 0..coords.len() {
                if i != j {
                    let d = dist_sq(coords[i], coords[j]);
                    if d < best {
                        best = d;
                    }
                }
            }
            out.push(best.sqrt());
        }
        return Ok(out);
    }
    let tree = KdTree::build(&coords);
    Ok((0..coords.len())
        .map(|i| {
            let (d, _) = tree
                .nearest_excluding(coords[i], i as u32)
                .expect("len >= 2 guarantees a neighbour");
            d.sqrt()
        })
        .collect())
}

/// Spatial index mapping arbitrary query positions to their nearest stop.
///
/// Exact distance ties resolve to the lexicographically smallest stop id so
/// assignment is reproducible regardless of input order.
pub struct StopIndex {
    projection: Projection,
    ids: Vec<String>,
    coords: Vec<[f64; 2]>,
    tree: Option<KdTree>,
}

impl StopIndex {
    /// `stops` are `(id, latitude, longitude)` triples.
    pub fn build<S: AsRef<str>>(
        projection: Projection,
        stops: &[(S, f64, f64)],
    ) -> Result<StopIndex> {
        if stops.is_empty() {
            return Err(Error::Domain("stop index over an empty stop set".into()));
        }
        let mut ids = Vec::with_capacity(stops.len());
        let mut coords = Vec::with_capacity(stops.len());
        for (id, lat, lon) in stops {
            let p = projection.project(*lat, *lon)?;
            ids.push(id.as_ref().to_owned());
            coords.push([p.x, p.y]);
        }
        let tree = if coords.len() >= EXHAUSTIVE_CUTOFF {
            Some(KdTree::build(&coords))
        } else {
            None
        };
        Ok(StopIndex {
            projection,
            ids,
            coords,
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    /// Nearest stop to a geographic position: `(stop_id, metres)`.
    pub fn nearest(&self, latitude: f64, longitude: f64) -> Result<(&str, f64)> {
        let q = self.projection.project(latitude, longitude)?;
        let query = [q.x, q.y];
        let prefer = |cand: u32, incumbent: u32| self.ids[cand as usize] < self.ids[incumbent as usize];
        let (d, idx) = match &self.tree {
            Some(tree) => tree
                .nearest_tiebreak(query, &prefer)
                .expect("index is non-empty"),
            None => {
                let mut best: Option<(f64, u32)> = None;
                for (i, &c) in self.coords.iter().enumerate() {
                    let d = dist_sq(c, query);
                    let replace = match best {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && prefer(i as u32, bi)),
                    };
                    if replace {
                        best = Some((d, i as u32));
                    }
                }
                best.expect("index is non-empty")
            }
        };
        Ok((&self.ids[idx as usize], d.sqrt()))
    }
}
