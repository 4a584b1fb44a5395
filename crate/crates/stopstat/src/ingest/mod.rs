//! Feed ingestion: polling a TfE-style open-data API and persisting raw
//! vehicle snapshots.
//!
//! Two endpoints are consumed: `GET /vehicle_locations` for live vehicle
//! positions and `GET /stops` for the stop registry. Parsing maps absent
//! and explicit-null JSON fields to the same optional-absent state, applies
//! no filtering (that is [`crate::cleanse`]'s job), and rejects entries
//! that break hard invariants (coordinate bounds, empty ids, non-positive
//! timestamps). Snapshots land in an append-only newline-delimited store;
//! see [`store::SnapshotStore`].

pub mod store;

pub use store::{AppendOutcome, SnapshotRecord, SnapshotStore, StopsDocument};

use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped vehicle record as reported by the feed, unfiltered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleObservation {
    pub vehicle_id: String,
    pub service_name: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    /// Travel direction in degrees, `[0, 360)` when the GPS unit reports it.
    pub heading: Option<f64>,
    pub destination: Option<String>,
    pub next_stop: Option<String>,
    /// UTC epoch seconds of the GPS fix.
    pub timestamp: i64,
}

impl VehicleObservation {
    /// Hard invariants every stored observation satisfies. Softer quality
    /// rules (null headings, depot proximity, ...) live in `cleanse`.
    pub fn validate(&self) -> Result<()> {
        if self.vehicle_id.is_empty() {
            return Err(Error::Domain("vehicle_id must be non-empty".into()));
        }
        if !self.latitude.is_finite() || !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Domain(format!(
                "latitude {} outside [-90, 90]",
                self.latitude
            )));
        }
        if !self.longitude.is_finite() || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Domain(format!(
                "longitude {} outside [-180, 180]",
                self.longitude
            )));
        }
        if self.timestamp <= 0 {
            return Err(Error::Domain(format!(
                "timestamp must be positive epoch seconds, got {}",
                self.timestamp
            )));
        }
        Ok(())
    }
}

/// A transit stop from the stop registry feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub stop_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl Stop {
    pub fn validate(&self) -> Result<()> {
        if self.stop_id.is_empty() {
            return Err(Error::Domain("stop_id must be non-empty".into()));
        }
        if !self.latitude.is_finite() || !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Domain(format!(
                "latitude {} outside [-90, 90]",
                self.latitude
            )));
        }
        if !self.longitude.is_finite() || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Domain(format!(
                "longitude {} outside [-180, 180]",
                self.longitude
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct WireVehicleFeed {
    vehicles: Vec<WireVehicle>,
}

/// Wire shape of one `/vehicle_locations` entry. Every optional is
/// `default`, so a missing key and an explicit `null` both land on `None`.
#[derive(Deserialize)]
struct WireVehicle {
    vehicle_id: String,
    latitude: f64,
    longitude: f64,
    last_gps_fix: i64,
    #[serde(default)]
    heading: Option<f64>,
    #[serde(default)]
    destination: Option<String>,
    #[serde(default)]
    service_name: Option<String>,
    #[serde(default)]
    next_stop: Option<String>,
}

#[derive(Deserialize)]
struct WireStopFeed {
    stops: Vec<WireStop>,
}

#[derive(Deserialize)]
struct WireStop {
    stop_id: String,
    name: String,
    latitude: f64,
    longitude: f64,
}

/// Convert a serde_json error into [`Error::Parse`], recovering the byte
/// offset from the reported line/column against the source text.
pub(crate) fn parse_error(source: &str, err: &serde_json::Error) -> Error {
    let line = err.line();
    let column = err.column();
    let mut offset = 0usize;
    for (i, l) in source.split('\n').enumerate() {
        if i + 1 == line {
            offset += column.saturating_sub(1).min(l.len());
            break;
        }
        offset += l.len() + 1;
    }
    Error::Parse {
        message: err.to_string(),
        offset,
        line,
        column,
    }
}

/// Parse a `/vehicle_locations` payload. No filtering: one observation per
/// schema-valid entry, in feed order.
pub fn parse_vehicle_payload(payload: &str) -> Result<Vec<VehicleObservation>> {
    let feed: WireVehicleFeed =
        serde_json::from_str(payload).map_err(|e| parse_error(payload, &e))?;
    feed.vehicles
        .into_iter()
        .enumerate()
        .map(|(index, w)| {
            let obs = VehicleObservation {
                vehicle_id: w.vehicle_id,
                service_name: w.service_name,
                latitude: w.latitude,
                longitude: w.longitude,
                heading: w.heading,
                destination: w.destination,
                next_stop: w.next_stop,
                timestamp: w.last_gps_fix,
            };
            obs.validate().map_err(|e| Error::InvalidEntry {
                index,
                message: e.to_string(),
            })?;
            Ok(obs)
        })
        .collect()
}

/// Parse a `/stops` payload. Duplicate `stop_id`s collapse to the first
/// occurrence with a warning.
pub fn parse_stops_payload(payload: &str) -> Result<Vec<Stop>> {
    let feed: WireStopFeed = serde_json::from_str(payload).map_err(|e| parse_error(payload, &e))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(feed.stops.len());
    for (index, w) in feed.stops.into_iter().enumerate() {
        let stop = Stop {
            stop_id: w.stop_id,
            name: w.name,
            latitude: w.latitude,
            longitude: w.longitude,
        };
        stop.validate().map_err(|e| Error::InvalidEntry {
            index,
            message: e.to_string(),
        })?;
        if seen.insert(stop.stop_id.clone()) {
            out.push(stop);
        } else {
            log::warn!(
                "stop feed entry {index} repeats stop_id {}; keeping the first occurrence",
                stop.stop_id
            );
        }
    }
    Ok(out)
}

/// HTTP client for the two feed endpoints. Authentication is a static
/// `X-API-Key` header when configured; anything fancier is out of scope.
pub struct FeedClient {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl FeedClient {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Self::DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        FeedClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            api_key: None,
            agent: config.into(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    fn get_text(&self, path: &str) -> Result<String> {
        let url = format!("{}{path}", self.base_url);
        let mut request = self.agent.get(&url);
        if let Some(key) = &self.api_key {
            request = request.header("X-API-Key", key);
        }
        let mut response = request
            .call()
            .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Fetch(format!("GET {url}: reading body: {e}")))
    }

    /// `GET /vehicle_locations`.
    pub fn fetch_vehicles(&self) -> Result<Vec<VehicleObservation>> {
        parse_vehicle_payload(&self.get_text("/vehicle_locations")?)
    }

    /// `GET /stops`.
    pub fn fetch_stops(&self) -> Result<Vec<Stop>> {
        parse_stops_payload(&self.get_text("/stops")?)
    }
}

/// Polling cadence. The defaults mirror a five-minute collection interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollConfig {
    pub interval_s: u64,
    pub duration_s: u64,
    /// Prefix for batch ids; defaults to the epoch second the poll started,
    /// which keeps ids unique across runs against the same store.
    pub run_id: Option<String>,
}

pub const DEFAULT_POLL_INTERVAL_S: u64 = 300;

impl Default for PollConfig {
    fn default() -> Self {
        PollConfig {
            interval_s: DEFAULT_POLL_INTERVAL_S,
            duration_s: DEFAULT_POLL_INTERVAL_S,
            run_id: None,
        }
    }
}

/// Number of fetch attempts a poll makes: one per slot on a fixed-rate
/// schedule, endpoints sampled at t = 0, interval, ..., so
/// `floor(duration/interval) + 1` in total.
pub fn poll_attempts(config: &PollConfig) -> Result<usize> {
    if config.interval_s < 1 {
        return Err(Error::Config(format!(
            "poll interval must be at least 1 s, got {}",
            config.interval_s
        )));
    }
    if config.duration_s < config.interval_s {
        return Err(Error::Config(format!(
            "poll duration ({} s) must be at least one interval ({} s)",
            config.duration_s, config.interval_s
        )));
    }
    Ok((config.duration_s / config.interval_s) as usize + 1)
}

/// Outcome of one poll run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollSummary {
    pub attempts: usize,
    pub batches_appended: usize,
    pub records_appended: usize,
    pub fetch_failures: usize,
}

/// Drive a poll with injectable effects. `fetch` is called once per slot;
/// `sleep` receives the remaining time to the next slot boundary (fixed
/// rate: slot k fires at `k * interval` after start, so a slow fetch eats
/// into its own gap instead of shifting later slots).
///
/// Fetch failures are counted and logged, never fatal. Store write failures
/// are fatal.
pub fn run_poll_with<F, S>(
    store: &SnapshotStore,
    config: &PollConfig,
    mut fetch: F,
    mut sleep: S,
) -> Result<PollSummary>
where
    F: FnMut(usize) -> Result<Vec<VehicleObservation>>,
    S: FnMut(Duration),
{
    let attempts = poll_attempts(config)?;
    let run_id = config.run_id.clone().unwrap_or_else(|| {
        format!(
            "{}",
            SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        )
    });
    let start = Instant::now();
    let mut summary = PollSummary {
        attempts,
        batches_appended: 0,
        records_appended: 0,
        fetch_failures: 0,
    };
    for slot in 0..attempts {
        let target = Duration::from_secs(slot as u64 * config.interval_s);
        let elapsed = start.elapsed();
        if target > elapsed {
            sleep(target - elapsed);
        }
        match fetch(slot) {
            Ok(observations) => {
                let retrieved_at = SystemTime::now()
                    .duration_since(SystemTime::UNIX_EPOCH)
                    .map(|d| d.as_secs() as i64)
                    .unwrap_or(0);
                let batch_id = format!("{run_id}-{slot:04}");
                let outcome = store.append_batch(&batch_id, retrieved_at, &observations)?;
                summary.batches_appended += 1;
                summary.records_appended += outcome.appended;
            }
            Err(e) => {
                log::warn!("poll slot {slot} fetch failed: {e}");
                summary.fetch_failures += 1;
            }
        }
    }
    Ok(summary)
}

/// Poll the live feed and persist every successful batch.
pub fn poll(client: &FeedClient, config: &PollConfig, store: &SnapshotStore) -> Result<PollSummary> {
    run_poll_with(store, config, |_| client.fetch_vehicles(), std::thread::sleep)
}
