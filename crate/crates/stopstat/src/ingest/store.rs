//! Append-only snapshot persistence.
//!
//! Vehicle observations are stored as newline-delimited JSON, one record
//! per line carrying its batch metadata, so a crash can lose at most the
//! batch being written and never corrupts earlier ones. The stop registry
//! is a small sidecar document next to the snapshot file ("latest wins",
//! stops are reference data rather than a time series).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Stop, VehicleObservation};

/// One snapshot line. Field order is the wire order; optionals serialize as
/// explicit `null` so every line has the full key set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub batch_id: String,
    pub retrieved_at: i64,
    pub vehicle_id: String,
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub heading: Option<f64>,
    pub service_name: Option<String>,
    pub destination: Option<String>,
    pub next_stop: Option<String>,
}

impl SnapshotRecord {
    pub fn from_observation(
        batch_id: impl Into<String>,
        retrieved_at: i64,
        observation: &VehicleObservation,
    ) -> Self {
        SnapshotRecord {
            batch_id: batch_id.into(),
            retrieved_at,
            vehicle_id: observation.vehicle_id.clone(),
            timestamp: observation.timestamp,
            latitude: observation.latitude,
            longitude: observation.longitude,
            heading: observation.heading,
            service_name: observation.service_name.clone(),
            destination: observation.destination.clone(),
            next_stop: observation.next_stop.clone(),
        }
    }

    pub fn observation(&self) -> VehicleObservation {
        VehicleObservation {
            vehicle_id: self.vehicle_id.clone(),
            service_name: self.service_name.clone(),
            latitude: self.latitude,
            longitude: self.longitude,
            heading: self.heading,
            destination: self.destination.clone(),
            next_stop: self.next_stop.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Stop registry sidecar: the latest fetched stop list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopsDocument {
    pub retrieved_at: i64,
    pub stops: Vec<Stop>,
}

/// What one `append_batch` call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendOutcome {
    /// Records written to the file.
    pub appended: usize,
    /// Entries dropped because their (vehicle_id, timestamp) repeated an
    /// earlier entry of the same batch.
    pub duplicates_removed: usize,
    /// The whole batch was skipped because its id is already stored.
    pub batch_already_present: bool,
}

pub struct SnapshotStore {
    path: PathBuf,
}

impl SnapshotStore {
    /// Open (or lazily create on first append) a store at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<SnapshotStore> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() && !parent.exists() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        Ok(SnapshotStore { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Path of the stop registry sidecar: `<snapshot>.stops.json`.
    pub fn stops_path(&self) -> PathBuf {
        let mut name = self.path.file_name().unwrap_or_default().to_os_string();
        name.push(".stops.json");
        self.path.with_file_name(name)
    }

    /// Append one batch. Re-appending an already-stored batch id is a no-op
    /// (idempotence), and (vehicle_id, timestamp) duplicates within the
    /// batch collapse to their first occurrence, preserving feed order.
    pub fn append_batch(
        &self,
        batch_id: &str,
        retrieved_at: i64,
        observations: &[VehicleObservation],
    ) -> Result<AppendOutcome> {
        if batch_id.is_empty() {
            return Err(Error::Consistency("batch_id must be non-empty".into()));
        }
        if self.batch_ids()?.contains(batch_id) {
            return Ok(AppendOutcome {
                appended: 0,
                duplicates_removed: 0,
                batch_already_present: true,
            });
        }
        let mut seen = HashSet::new();
        let mut buffer = String::new();
        let mut appended = 0usize;
        for observation in observations {
            observation.validate().map_err(|e| {
                Error::Consistency(format!("refusing to store invalid observation: {e}"))
            })?;
            if !seen.insert((observation.vehicle_id.clone(), observation.timestamp)) {
                continue;
            }
            let record = SnapshotRecord::from_observation(batch_id, retrieved_at, observation);
            buffer.push_str(
                &serde_json::to_string(&record)
                    .expect("snapshot records always serialize"),
            );
            buffer.push('\n');
            appended += 1;
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(buffer.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        file.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(AppendOutcome {
            appended,
            duplicates_removed: observations.len() - appended,
            batch_already_present: false,
        })
    }

    /// All records in file order. A missing file is an empty store.
    pub fn read_all(&self) -> Result<Vec<SnapshotRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: SnapshotRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                message: format!("{}: {e}", self.path.display()),
                offset: 0,
                line: i + 1,
                column: e.column(),
            })?;
            records.push(record);
        }
        Ok(records)
    }

    /// Observations in file order, batch metadata stripped.
    pub fn read_observations(&self) -> Result<Vec<VehicleObservation>> {
        Ok(self.read_all()?.iter().map(SnapshotRecord::observation).collect())
    }

    /// Distinct batch ids in first-seen order.
    pub fn batch_ids(&self) -> Result<Vec<String>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for record in self.read_all()? {
            if seen.insert(record.batch_id.clone()) {
                out.push(record.batch_id);
            }
        }
        Ok(out)
    }

    /// Replace the stop registry sidecar ("latest wins").
    pub fn write_stops(&self, stops: &[Stop], retrieved_at: i64) -> Result<()> {
        let doc = StopsDocument {
            retrieved_at,
            stops: stops.to_vec(),
        };
        let path = self.stops_path();
        let json = serde_json::to_string_pretty(&doc).expect("stop documents always serialize");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn read_stops(&self) -> Result<StopsDocument> {
        let path = self.stops_path();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            message: format!("{}: {e}", path.display()),
            offset: 0,
            line: e.line(),
            column: e.column(),
        })
    }
}

/// Convenience trait: `Vec<String>::contains(&str)` without allocation.
trait ContainsStr {
    fn contains(&self, needle: &str) -> bool;
}

impl ContainsStr for Vec<String> {
    fn contains(&self, needle: &str) -> bool {
        self.iter().any(|s| s == needle)
    }
}
