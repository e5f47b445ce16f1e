use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{
    Batch, CarrierDetails, CarrierRecord, LedgerError, LedgerRecord, LedgerState, Location, ProjectStageKind,
    RobotOrder, StabilizationEvent,
};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const LOCK_FILE: &str = ".lock";
const CARRIERS_CSV: &str = "carriers.csv";
const BATCHES_CSV: &str = "batches.csv";
const STAGES_CSV: &str = "stages.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LedgerError + '_ {
    move |source| LedgerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Read-only replay of a ledger directory. Takes no lock; the log is only
/// ever appended to, so a complete line is never rewritten under a reader.
pub struct LedgerSnapshot;

impl LedgerSnapshot {
    pub fn read(dir: &Path) -> Result<LedgerState, LedgerError> {
        let path = dir.join(EVENTS_FILE);
        let mut state = LedgerState::default();
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(state),
            Err(e) => return Err(io_err(&path)(e)),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.is_empty() {
                continue;
            }
            let record: LedgerRecord = serde_json::from_str(&line).map_err(|e| LedgerError::CorruptLog {
                line: i + 1,
                message: e.to_string(),
            })?;
            state.apply(&record);
        }
        Ok(state)
    }
}

/// Exclusive writer over a ledger directory. Holding a `Ledger` holds the
/// directory lock; it is released on drop.
pub struct Ledger {
    dir: PathBuf,
    state: LedgerState,
    lock_path: PathBuf,
}

impl Ledger {
    pub fn open(dir: &Path) -> Result<Ledger, LedgerError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock_path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(LedgerError::Locked(dir.to_path_buf()))
            }
            Err(e) => return Err(io_err(&lock_path)(e)),
        }
        let mut ledger = Ledger {
            dir: dir.to_path_buf(),
            state: LedgerState::default(),
            lock_path,
        };
        // Replay after locking so no writer can slip in between.
        ledger.state = LedgerSnapshot::read(dir)?;
        Ok(ledger)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    fn commit(&mut self, records: &[LedgerRecord]) -> Result<(), LedgerError> {
        let path = self.dir.join(EVENTS_FILE);
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("ledger records serialize"));
            text.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    /// Runs a state operation on a scratch copy and commits its records only
    /// if it succeeds, so a rejected operation leaves state and log untouched.
    pub fn transact<T>(
        &mut self,
        op: impl FnOnce(&mut LedgerState) -> Result<(Vec<LedgerRecord>, T), LedgerError>,
    ) -> Result<T, LedgerError> {
        let mut scratch = self.state.clone();
        let (records, value) = op(&mut scratch)?;
        self.commit(&records)?;
        self.state = scratch;
        self.write_views()?;
        Ok(value)
    }

    pub fn register_carrier(
        &mut self,
        project_id: &str,
        proposed_id: &str,
        details: CarrierDetails,
    ) -> Result<CarrierRecord, LedgerError> {
        self.transact(|s| s.register_carrier(project_id, proposed_id, details))
    }

    pub fn record_event(&mut self, event: StabilizationEvent) -> Result<StabilizationEvent, LedgerError> {
        self.transact(|s| {
            let record = s.record_event(event)?;
            let LedgerRecord::Stabilization { event } = &record else {
                unreachable!()
            };
            let event = event.clone();
            Ok((vec![record], event))
        })
    }

    pub fn create_batch(
        &mut self,
        batch_id: &str,
        carrier_ids: Vec<String>,
        robot_order: RobotOrder,
        size_limit: usize,
    ) -> Result<Batch, LedgerError> {
        self.transact(|s| {
            let record = s.create_batch(batch_id, carrier_ids, robot_order, size_limit)?;
            let batch = s.batch(batch_id).cloned().expect("batch just created");
            Ok((vec![record], batch))
        })
    }

    pub fn close_batch(&mut self, batch_id: &str) -> Result<(), LedgerError> {
        self.transact(|s| Ok((vec![s.close_batch(batch_id)?], ())))
    }

    pub fn set_location(&mut self, carrier_id: &str, location: Location) -> Result<(), LedgerError> {
        self.transact(|s| Ok((vec![s.set_location(carrier_id, location)?], ())))
    }

    pub fn advance_stage(
        &mut self,
        project_id: &str,
        stage: ProjectStageKind,
        tooling: &str,
    ) -> Result<(), LedgerError> {
        self.transact(|s| Ok((vec![s.advance_stage(project_id, stage, tooling)?], ())))
    }

    /// Rewrites the CSV views from current state.
    pub fn write_views(&self) -> Result<(), LedgerError> {
        let s = &self.state;
        self.write_csv(
            CARRIERS_CSV,
            &[
                "carrier_id",
                "project_id",
                "box_id",
                "order_in_box",
                "location",
                "custodian",
                "status",
                "disambiguation_suffix",
            ],
            s.carriers().map(|c| {
                let r = &c.record;
                vec![
                    r.carrier_id.clone(),
                    r.project_id.clone(),
                    r.box_id.clone().unwrap_or_default(),
                    r.order_in_box.map(|n| n.to_string()).unwrap_or_default(),
                    r.location.to_string(),
                    r.custodian.clone(),
                    c.status.label().to_owned(),
                    r.disambiguation_suffix.map(|n| format!("#{n}")).unwrap_or_default(),
                ]
            }),
        )?;
        self.write_csv(
            BATCHES_CSV,
            &["batch_id", "robot_order", "size_limit", "open", "carrier_ids"],
            s.batches().map(|(b, open)| {
                vec![
                    b.batch_id.clone(),
                    format!("{:?}", b.robot_order),
                    b.size_limit.to_string(),
                    open.to_string(),
                    b.carrier_ids.join(" "),
                ]
            }),
        )?;
        self.write_csv(
            STAGES_CSV,
            &["project_id", "stage", "recorded_at", "tooling"],
            s.stages().iter().map(|st| {
                vec![
                    st.project_id.clone(),
                    st.stage.to_string(),
                    st.recorded_at.to_rfc3339(),
                    st.tooling.clone(),
                ]
            }),
        )
    }

    fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: impl Iterator<Item = Vec<String>>,
    ) -> Result<(), LedgerError> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::CRLF)
                .from_path(&tmp)?;
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush().map_err(io_err(&tmp))?;
        }
        let target = self.dir.join(name);
        fs::rename(&tmp, &target).map_err(io_err(&target))
    }
}

impl Drop for Ledger {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}
