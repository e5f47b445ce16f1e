//! Stabilization metadata: carrier registry, batches, stabilization events,
//! carrier locations and project stages.
//!
//! The ledger is an append-only JSON-lines log (`events.jsonl`). Current
//! state is obtained by replaying the log; `carriers.csv`, `batches.csv` and
//! `stages.csv` are views regenerated after every write. [`LedgerState`]
//! holds the validation rules and works in memory; [`Ledger`] adds the
//! on-disk log and the single-writer lock.

mod analysis;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    select_candidates, staffing_person_years, throughput_stats, Candidate, MonthPeriod, PolicyWeights,
    RankedCandidate, ThroughputStats,
};
pub use store::{Ledger, LedgerSnapshot, EVENTS_FILE, LOCK_FILE};

pub const DEFAULT_BATCH_SIZE_LIMIT: usize = 30;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("carrier identifier must not be empty")]
    EmptyIdentifier,
    #[error("unknown carrier {0:?}")]
    UnknownCarrier(String),
    #[error("unknown batch {0:?}")]
    UnknownBatch(String),
    #[error("batch {0:?} already exists")]
    DuplicateBatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch has {size} carriers, above the limit of {limit}")]
    BatchTooLarge { size: usize, limit: usize },
    #[error("batch size limit must be positive")]
    InvalidLimit,
    #[error("carrier {carrier_id:?} is already in open batch {batch_id:?}")]
    CarrierInOpenBatch { carrier_id: String, batch_id: String },
    #[error("carrier {carrier_id:?}: {from} -> {to} is not a legal status transition")]
    IllegalTransition {
        carrier_id: String,
        from: StabilizationStatus,
        to: StabilizationStatus,
    },
    #[error("a {0} event must list its output files")]
    MissingOutputs(StabilizationStatus),
    #[error("project {project_id:?}: cannot record {to} after {from}")]
    StageSkip {
        project_id: String,
        from: String,
        to: ProjectStageKind,
    },
    #[error("candidate weights sum to {0}, not 1")]
    WeightsNotNormalized(f64),
    #[error("invalid candidate {carrier_id:?}: {reason}")]
    InvalidCandidate { carrier_id: String, reason: String },
    #[error("period covers no months")]
    EmptyPeriod,
    #[error("ledger at {0} is locked by another writer")]
    Locked(std::path::PathBuf),
    #[error("ledger I/O error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("CSV view error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    Shelf,
    StabilizationStation,
    FailureInvestigation,
    WithCurator,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Location {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Shelf" => Ok(Location::Shelf),
            "StabilizationStation" => Ok(Location::StabilizationStation),
            "FailureInvestigation" => Ok(Location::FailureInvestigation),
            "WithCurator" => Ok(Location::WithCurator),
            _ => Err(format!("unknown location {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilizationStatus {
    NotAttempted,
    OpenFailed,
    OpenPartialClone,
    ClosedSuccessful,
    ClosedManualClone,
    ClosedPartialClone,
    ClosedFailed,
}

impl StabilizationStatus {
    pub const ALL: [StabilizationStatus; 7] = [
        StabilizationStatus::NotAttempted,
        StabilizationStatus::OpenFailed,
        StabilizationStatus::OpenPartialClone,
        StabilizationStatus::ClosedSuccessful,
        StabilizationStatus::ClosedManualClone,
        StabilizationStatus::ClosedPartialClone,
        StabilizationStatus::ClosedFailed,
    ];

    /// The label used in the project spreadsheets.
    pub fn label(self) -> &'static str {
        match self {
            StabilizationStatus::NotAttempted => "Not attempted",
            StabilizationStatus::OpenFailed => "open-Failed",
            StabilizationStatus::OpenPartialClone => "open-Partial clone",
            StabilizationStatus::ClosedSuccessful => "closed-Successful",
            StabilizationStatus::ClosedManualClone => "closed-Manual clone",
            StabilizationStatus::ClosedPartialClone => "closed-Partial clone",
            StabilizationStatus::ClosedFailed => "closed-Failed",
        }
    }

    pub fn is_closed(self) -> bool {
        matches!(
            self,
            StabilizationStatus::ClosedSuccessful
                | StabilizationStatus::ClosedManualClone
                | StabilizationStatus::ClosedPartialClone
                | StabilizationStatus::ClosedFailed
        )
    }

    pub fn is_open(self) -> bool {
        matches!(self, StabilizationStatus::OpenFailed | StabilizationStatus::OpenPartialClone)
    }

    /// Legal successors: open statuses may repeat or close, closed ones are
    /// terminal, and nothing returns to `NotAttempted`.
    pub fn can_become(self, next: StabilizationStatus) -> bool {
        use StabilizationStatus::*;
        match self {
            NotAttempted => matches!(next, OpenFailed | OpenPartialClone | ClosedSuccessful | ClosedFailed),
            OpenFailed => matches!(next, OpenFailed | ClosedManualClone | ClosedFailed),
            OpenPartialClone => {
                matches!(next, OpenPartialClone | ClosedPartialClone | ClosedManualClone | ClosedFailed)
            }
            ClosedSuccessful | ClosedManualClone | ClosedPartialClone | ClosedFailed => false,
        }
    }

    fn kebab(self) -> String {
        serde_json::to_value(self).unwrap().as_str().unwrap().to_owned()
    }
}

impl fmt::Display for StabilizationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StabilizationStatus {
    type Err = String;

    /// Accepts the spreadsheet label or the kebab-case form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StabilizationStatus::ALL
            .into_iter()
            .find(|st| st.label().eq_ignore_ascii_case(s) || st.kebab() == s)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierRecord {
    pub carrier_id: String,
    pub project_id: String,
    pub box_id: Option<String>,
    pub order_in_box: Option<u32>,
    pub location: Location,
    pub custodian: String,
    pub primary_metadata_ref: String,
    /// `N` when the proposed identifier was taken and `#N` was appended.
    pub disambiguation_suffix: Option<u32>,
}

/// Optional registration fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierDetails {
    pub box_id: Option<String>,
    pub order_in_box: Option<u32>,
    pub custodian: String,
    pub primary_metadata_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationEvent {
    pub carrier_id: String,
    pub occurred_at: DateTime<Utc>,
    pub operator: String,
    pub software: Software,
    pub hardware: String,
    pub status: StabilizationStatus,
    pub output_files: Vec<String>,
    pub output_extensions: Vec<String>,
    /// Assigned by the ledger: 1 for a carrier's first event.
    pub attempt_number: u32,
    pub run_seconds: Option<f64>,
    pub batch_id: Option<String>,
    /// Total bytes of the stabilized output, for throughput statistics.
    pub output_bytes: u64,
    pub comments: String,
}

impl StabilizationEvent {
    /// An event with empty descriptive fields, stamped now.
    pub fn new(carrier_id: &str, status: StabilizationStatus) -> Self {
        StabilizationEvent {
            carrier_id: carrier_id.to_owned(),
            occurred_at: Utc::now(),
            operator: String::new(),
            software: Software {
                name: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
            hardware: String::new(),
            status,
            output_files: Vec::new(),
            output_extensions: Vec::new(),
            attempt_number: 0,
            run_seconds: None,
            batch_id: None,
            output_bytes: 0,
            comments: String::new(),
        }
    }

    /// Sets the output names and derives their extensions.
    pub fn with_outputs(mut self, files: Vec<String>, bytes: u64) -> Self {
        let mut extensions: Vec<String> = files
            .iter()
            .filter_map(|f| f.rsplit_once('.').filter(|(stem, _)| !stem.is_empty()).map(|(_, e)| e.to_ascii_lowercase()))
            .collect();
        extensions.sort();
        extensions.dedup();
        self.output_files = files;
        self.output_extensions = extensions;
        self.output_bytes = bytes;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotOrder {
    Fifo,
    Lifo,
}

impl FromStr for RobotOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(RobotOrder::Fifo),
            "lifo" => Ok(RobotOrder::Lifo),
            _ => Err(format!("unknown robot order {s:?} (fifo or lifo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    /// Load order.
    pub carrier_ids: Vec<String>,
    pub robot_order: RobotOrder,
    pub size_limit: usize,
}

/// Order in which the robot will process the batch.
pub fn processing_order(batch: &Batch) -> Result<Vec<String>, LedgerError> {
    if batch.carrier_ids.is_empty() {
        return Err(LedgerError::EmptyBatch);
    }
    let mut order = batch.carrier_ids.clone();
    if batch.robot_order == RobotOrder::Lifo {
        order.reverse();
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProjectStageKind {
    Selected,
    Stabilized,
    CleanedUp,
    Extracted,
    Curated,
    ServiceCopies,
}

impl ProjectStageKind {
    pub const ALL: [ProjectStageKind; 6] = [
        ProjectStageKind::Selected,
        ProjectStageKind::Stabilized,
        ProjectStageKind::CleanedUp,
        ProjectStageKind::Extracted,
        ProjectStageKind::Curated,
        ProjectStageKind::ServiceCopies,
    ];

    fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }
}

impl fmt::Display for ProjectStageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ProjectStageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProjectStageKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectStage {
    pub project_id: String,
    pub stage: ProjectStageKind,
    pub recorded_at: DateTime<Utc>,
    pub tooling: String,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LedgerRecord {
    CarrierRegistered {
        at: DateTime<Utc>,
        carrier: CarrierRecord,
    },
    DuplicateName {
        at: DateTime<Utc>,
        project_id: String,
        proposed_id: String,
        assigned_id: String,
    },
    BatchCreated {
        at: DateTime<Utc>,
        batch: Batch,
    },
    BatchClosed {
        at: DateTime<Utc>,
        batch_id: String,
    },
    Stabilization {
        event: StabilizationEvent,
    },
    LocationChanged {
        at: DateTime<Utc>,
        carrier_id: String,
        location: Location,
    },
    StageRecorded {
        stage: ProjectStage,
    },
}

/// Current carrier view: registration data plus replayed status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierState {
    pub record: CarrierRecord,
    pub status: StabilizationStatus,
    pub attempts: u32,
}

/// State obtained by replaying the log. Every mutating method validates,
/// returns the record to append and applies it.
#[derive(Debug, Clone, Default)]
pub struct LedgerState {
    carriers: BTreeMap<String, CarrierState>,
    batches: BTreeMap<String, (Batch, bool)>,
    stages: Vec<ProjectStage>,
    events: Vec<StabilizationEvent>,
    duplicate_names: usize,
}

impl LedgerState {
    pub fn carrier(&self, carrier_id: &str) -> Option<&CarrierState> {
        self.carriers.get(carrier_id)
    }

    pub fn carriers(&self) -> impl Iterator<Item = &CarrierState> {
        self.carriers.values()
    }

    pub fn batch(&self, batch_id: &str) -> Option<&Batch> {
        self.batches.get(batch_id).map(|(b, _)| b)
    }

    /// Batches with their open flag, by id.
    pub fn batches(&self) -> impl Iterator<Item = (&Batch, bool)> {
        self.batches.values().map(|(b, open)| (b, *open))
    }

    pub fn stages(&self) -> &[ProjectStage] {
        &self.stages
    }

    pub fn events(&self) -> &[StabilizationEvent] {
        &self.events
    }

    pub fn duplicate_name_count(&self) -> usize {
        self.duplicate_names
    }

    pub fn current_stage(&self, project_id: &str) -> Option<ProjectStageKind> {
        self.stages.iter().rev().find(|s| s.project_id == project_id).map(|s| s.stage)
    }

    pub fn apply(&mut self, record: &LedgerRecord) {
        match record {
            LedgerRecord::CarrierRegistered { carrier, .. } => {
                self.carriers.insert(
                    carrier.carrier_id.clone(),
                    CarrierState {
                        record: carrier.clone(),
                        status: StabilizationStatus::NotAttempted,
                        attempts: 0,
                    },
                );
            }
            LedgerRecord::DuplicateName { .. } => self.duplicate_names += 1,
            LedgerRecord::BatchCreated { batch, .. } => {
                self.batches.insert(batch.batch_id.clone(), (batch.clone(), true));
            }
            LedgerRecord::BatchClosed { batch_id, .. } => {
                if let Some(entry) = self.batches.get_mut(batch_id) {
                    entry.1 = false;
                }
            }
            LedgerRecord::Stabilization { event } => {
                if let Some(c) = self.carriers.get_mut(&event.carrier_id) {
                    c.status = event.status;
                    c.attempts = event.attempt_number;
                    if event.status.is_open() {
                        c.record.location = Location::FailureInvestigation;
                    }
                }
                self.events.push(event.clone());
            }
            LedgerRecord::LocationChanged { carrier_id, location, .. } => {
                if let Some(c) = self.carriers.get_mut(carrier_id) {
                    c.record.location = *location;
                }
            }
            LedgerRecord::StageRecorded { stage } => self.stages.push(stage.clone()),
        }
    }

    /// Registers a carrier, disambiguating a taken identifier as `id#N`.
    /// Returns the records to append (a duplicate-name record first, when one
    /// is needed) and the stored carrier.
    pub fn register_carrier(
        &mut self,
        project_id: &str,
        proposed_id: &str,
        details: CarrierDetails,
    ) -> Result<(Vec<LedgerRecord>, CarrierRecord), LedgerError> {
        if proposed_id.trim().is_empty() {
            return Err(LedgerError::EmptyIdentifier);
        }
        let now = Utc::now();
        let mut records = Vec::new();
        let (carrier_id, suffix) = if self.carriers.contains_key(proposed_id) {
            let n = (2u32..)
                .find(|n| !self.carriers.contains_key(&format!("{proposed_id}#{n}")))
                .unwrap();
            let assigned = format!("{proposed_id}#{n}");
            records.push(LedgerRecord::DuplicateName {
                at: now,
                project_id: project_id.to_owned(),
                proposed_id: proposed_id.to_owned(),
                assigned_id: assigned.clone(),
            });
            (assigned, Some(n))
        } else {
            (proposed_id.to_owned(), None)
        };
        let carrier = CarrierRecord {
            carrier_id,
            project_id: project_id.to_owned(),
            box_id: details.box_id,
            order_in_box: details.order_in_box,
            location: Location::Shelf,
            custodian: details.custodian,
            primary_metadata_ref: details.primary_metadata_ref,
            disambiguation_suffix: suffix,
        };
        records.push(LedgerRecord::CarrierRegistered {
            at: now,
            carrier: carrier.clone(),
        });
        for r in &records {
            self.apply(r);
        }
        Ok((records, carrier))
    }

    pub fn create_batch(
        &mut self,
        batch_id: &str,
        carrier_ids: Vec<String>,
        robot_order: RobotOrder,
        size_limit: usize,
    ) -> Result<LedgerRecord, LedgerError> {
        if size_limit == 0 {
            return Err(LedgerError::InvalidLimit);
        }
        if batch_id.is_empty() {
            return Err(LedgerError::EmptyIdentifier);
        }
        if self.batches.contains_key(batch_id) {
            return Err(LedgerError::DuplicateBatch(batch_id.to_owned()));
        }
        if carrier_ids.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        if carrier_ids.len() > size_limit {
            return Err(LedgerError::BatchTooLarge {
                size: carrier_ids.len(),
                limit: size_limit,
            });
        }
        let mut seen = BTreeSet::new();
        for id in &carrier_ids {
            if !self.carriers.contains_key(id) {
                return Err(LedgerError::UnknownCarrier(id.clone()));
            }
            let open_elsewhere = self
                .batches
                .values()
                .find(|(b, open)| *open && b.carrier_ids.contains(id))
                .map(|(b, _)| b.batch_id.clone());
            if let Some(other) = open_elsewhere.or_else(|| (!seen.insert(id)).then(|| batch_id.to_owned())) {
                return Err(LedgerError::CarrierInOpenBatch {
                    carrier_id: id.clone(),
                    batch_id: other,
                });
            }
        }
        let record = LedgerRecord::BatchCreated {
            at: Utc::now(),
            batch: Batch {
                batch_id: batch_id.to_owned(),
                carrier_ids,
                robot_order,
                size_limit,
            },
        };
        self.apply(&record);
        Ok(record)
    }

    pub fn close_batch(&mut self, batch_id: &str) -> Result<LedgerRecord, LedgerError> {
        if !self.batches.contains_key(batch_id) {
            return Err(LedgerError::UnknownBatch(batch_id.to_owned()));
        }
        let record = LedgerRecord::BatchClosed {
            at: Utc::now(),
            batch_id: batch_id.to_owned(),
        };
        self.apply(&record);
        Ok(record)
    }

    /// Validates and stores a stabilization event, assigning its attempt
    /// number. Returns the stored record.
    pub fn record_event(&mut self, mut event: StabilizationEvent) -> Result<LedgerRecord, LedgerError> {
        let carrier = self
            .carriers
            .get(&event.carrier_id)
            .ok_or_else(|| LedgerError::UnknownCarrier(event.carrier_id.clone()))?;
        if !carrier.status.can_become(event.status) {
            return Err(LedgerError::IllegalTransition {
                carrier_id: event.carrier_id.clone(),
                from: carrier.status,
                to: event.status,
            });
        }
        if event.status == StabilizationStatus::ClosedSuccessful && event.output_files.is_empty() {
            return Err(LedgerError::MissingOutputs(event.status));
        }
        if let Some(batch_id) = &event.batch_id {
            if !self.batches.contains_key(batch_id) {
                return Err(LedgerError::UnknownBatch(batch_id.clone()));
            }
        }
        event.attempt_number = carrier.attempts + 1;
        let record = LedgerRecord::Stabilization { event };
        self.apply(&record);
        Ok(record)
    }

    pub fn set_location(&mut self, carrier_id: &str, location: Location) -> Result<LedgerRecord, LedgerError> {
        if !self.carriers.contains_key(carrier_id) {
            return Err(LedgerError::UnknownCarrier(carrier_id.to_owned()));
        }
        let record = LedgerRecord::LocationChanged {
            at: Utc::now(),
            carrier_id: carrier_id.to_owned(),
            location,
        };
        self.apply(&record);
        Ok(record)
    }

    /// Records a project stage: the first stage must be `Selected`, later
    /// ones the immediate successor of the current stage or the current stage
    /// again (re-recorded with new tooling).
    pub fn advance_stage(
        &mut self,
        project_id: &str,
        stage: ProjectStageKind,
        tooling: &str,
    ) -> Result<LedgerRecord, LedgerError> {
        let legal = match self.current_stage(project_id) {
            None => stage == ProjectStageKind::Selected,
            Some(current) => stage == current || stage.index() == current.index() + 1,
        };
        if !legal {
            return Err(LedgerError::StageSkip {
                project_id: project_id.to_owned(),
                from: self
                    .current_stage(project_id)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "nothing".into()),
                to: stage,
            });
        }
        let record = LedgerRecord::StageRecorded {
            stage: ProjectStage {
                project_id: project_id.to_owned(),
                stage,
                recorded_at: Utc::now(),
                tooling: tooling.to_owned(),
            },
        };
        self.apply(&record);
        Ok(record)
    }
}
