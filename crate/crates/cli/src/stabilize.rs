use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use carrierforge_core::classify::{plan_for, CarrierClass};
use carrierforge_core::fixity::write_collection_manifest;
use carrierforge_core::ledger::{
    processing_order, Ledger, LedgerSnapshot, LedgerState, RobotOrder, StabilizationEvent, StabilizationStatus,
};
use carrierforge_core::pipeline::{run_plan, StabilizedOutput};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::identify::load_carrier;
use crate::report::{table, CliError, Report, EXIT_CONTENT, EXIT_OK};
use crate::CliConfig;

#[derive(Debug, Args)]
pub struct StabilizeArgs {
    /// CSV with header carrier_id,image_path,cue_path. Relative paths are
    /// resolved against the batch file's directory.
    pub batch_file: PathBuf,
    /// Record the run as a ledger batch with this id.
    #[arg(long)]
    pub batch_id: Option<String>,
    /// Robot order for the recorded batch.
    #[arg(long, default_value = "fifo")]
    pub order: RobotOrder,
    #[arg(long, default_value = "")]
    pub operator: String,
    #[arg(long, default_value = "")]
    pub hardware: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BatchRow {
    pub carrier_id: String,
    pub image_path: PathBuf,
    #[serde(default)]
    pub cue_path: Option<PathBuf>,
}

pub fn read_batch_file(path: &Path) -> Result<Vec<BatchRow>, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        let mut row: BatchRow = row.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        row.image_path = base.join(&row.image_path);
        row.cue_path = row
            .cue_path
            .filter(|p| !p.as_os_str().is_empty())
            .map(|p| base.join(p));
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarrierOutcome {
    pub carrier_id: String,
    pub project_id: String,
    pub status: StabilizationStatus,
    pub class: Option<CarrierClass>,
    pub attempt_number: u32,
    pub output_files: Vec<String>,
    pub output_bytes: u64,
    pub manual: bool,
    pub error: Option<String>,
}

struct Job {
    row: BatchRow,
    project_id: String,
}

struct Finished {
    index: usize,
    result: Result<StabilizedOutput, (Option<CarrierClass>, String)>,
    seconds: f64,
}

fn stabilize_one(cfg: &CliConfig, job: &Job) -> Result<StabilizedOutput, (Option<CarrierClass>, String)> {
    let input = load_carrier(&job.row.carrier_id, &job.row.image_path, job.row.cue_path.as_deref())
        .map_err(|e| (None, e.message))?;
    let class = input.classify();
    run_plan(&input, &plan_for(class), &cfg.output_root, &job.project_id).map_err(|e| (Some(class), e.to_string()))
}

/// Runs every job on at most `workers` threads. Results are handed to
/// `sink` on the calling thread as they finish.
fn run_pool(cfg: &CliConfig, jobs: &[Job], mut sink: impl FnMut(Finished)) {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..cfg.parallel_workers.min(jobs.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(index) else { break };
                let started = Instant::now();
                let result = stabilize_one(cfg, job);
                let finished = Finished {
                    index,
                    result,
                    seconds: started.elapsed().as_secs_f64(),
                };
                if tx.send(finished).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for finished in rx {
            sink(finished);
        }
    });
}

fn check_rows(cfg: &CliConfig, state: &LedgerState, rows: &[BatchRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::usage("batch file lists no carriers"));
    }
    if rows.len() > cfg.batch_size_limit {
        return Err(CliError::usage(format!(
            "batch lists {} carriers, above the limit of {}",
            rows.len(),
            cfg.batch_size_limit
        )));
    }
    let mut seen = BTreeSet::new();
    for row in rows {
        if !seen.insert(&row.carrier_id) {
            return Err(CliError::usage(format!("carrier {:?} listed twice", row.carrier_id)));
        }
        let carrier = state
            .carrier(&row.carrier_id)
            .ok_or_else(|| CliError::usage(format!("unknown carrier {:?}", row.carrier_id)))?;
        if carrier.status.is_closed() {
            return Err(CliError::usage(format!(
                "carrier {:?} is already {}",
                row.carrier_id, carrier.status
            )));
        }
    }
    Ok(())
}

fn render(outcomes: &[CarrierOutcome], code: i32) -> Report {
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.carrier_id.clone(),
                o.class.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
                o.status.to_string(),
                o.error.clone().unwrap_or_else(|| o.output_files.join(" ")),
            ]
        })
        .collect();
    let mut text = table(&["CARRIER", "CLASS", "STATUS", "DETAIL"], &rows);
    let ok = outcomes.iter().filter(|o| o.status == StabilizationStatus::ClosedSuccessful).count();
    text.push_str(&format!("{ok}/{} carriers closed-Successful\n", outcomes.len()));
    Report::new(code, text, outcomes)
}

pub fn run(cfg: &CliConfig, args: &StabilizeArgs) -> Result<Report, CliError> {
    let rows = read_batch_file(&args.batch_file)?;
    if cfg.dry_run {
        return dry_run(cfg, rows);
    }
    let mut ledger = Ledger::open(&cfg.ledger_dir)?;
    check_rows(cfg, ledger.state(), &rows)?;

    let mut order: Vec<usize> = (0..rows.len()).collect();
    if let Some(batch_id) = &args.batch_id {
        let ids: Vec<String> = rows.iter().map(|r| r.carrier_id.clone()).collect();
        let batch = ledger.create_batch(batch_id, ids, args.order, cfg.batch_size_limit)?;
        let position: BTreeMap<&str, usize> =
            rows.iter().enumerate().map(|(i, r)| (r.carrier_id.as_str(), i)).collect();
        order = processing_order(&batch)?.iter().map(|id| position[id.as_str()]).collect();
    }
    let jobs: Vec<Job> = order
        .iter()
        .map(|&i| Job {
            row: rows[i].clone(),
            project_id: ledger.state().carrier(&rows[i].carrier_id).unwrap().record.project_id.clone(),
        })
        .collect();

    let mut outcomes: Vec<Option<CarrierOutcome>> = vec![None; jobs.len()];
    let mut ledger_error = None;
    run_pool(cfg, &jobs, |finished| {
        let job = &jobs[finished.index];
        let id = &job.row.carrier_id;
        let (status, event, class, manual, error) = match finished.result {
            Ok(out) => {
                let manual = out.plan.is_manual();
                let mut event = StabilizationEvent::new(id, StabilizationStatus::ClosedSuccessful)
                    .with_outputs(out.output_files(), out.master_bytes);
                event.comments = if manual {
                    format!("manual follow-up: {}", out.plan.rationale)
                } else {
                    out.notes.clone()
                };
                (StabilizationStatus::ClosedSuccessful, event, Some(out.class), manual, None)
            }
            Err((class, message)) => {
                let mut event = StabilizationEvent::new(id, StabilizationStatus::OpenFailed);
                event.comments = message.clone();
                (StabilizationStatus::OpenFailed, event, class, false, Some(message))
            }
        };
        let mut event = event;
        event.operator = args.operator.clone();
        event.hardware = args.hardware.clone();
        event.run_seconds = Some(finished.seconds);
        event.batch_id = args.batch_id.clone();
        match ledger.record_event(event) {
            Ok(stored) => {
                outcomes[finished.index] = Some(CarrierOutcome {
                    carrier_id: id.clone(),
                    project_id: job.project_id.clone(),
                    status,
                    class,
                    attempt_number: stored.attempt_number,
                    output_files: stored.output_files,
                    output_bytes: stored.output_bytes,
                    manual,
                    error,
                })
            }
            Err(e) => ledger_error = Some(e),
        }
    });
    if let Some(e) = ledger_error {
        return Err(e.into());
    }
    if let Some(batch_id) = &args.batch_id {
        ledger.close_batch(batch_id)?;
    }

    let projects: BTreeSet<&str> = jobs.iter().map(|j| j.project_id.as_str()).collect();
    for project in projects {
        let root = cfg.output_root.join(project);
        if root.is_dir() {
            write_collection_manifest(&root)?;
        }
    }
    let outcomes: Vec<CarrierOutcome> = outcomes.into_iter().map(|o| o.expect("every job reports")).collect();
    let all_ok = outcomes.iter().all(|o| o.status == StabilizationStatus::ClosedSuccessful);
    Ok(render(&outcomes, if all_ok { EXIT_OK } else { EXIT_CONTENT }))
}

fn dry_run(cfg: &CliConfig, rows: Vec<BatchRow>) -> Result<Report, CliError> {
    let state = LedgerSnapshot::read(&cfg.ledger_dir)?;
    check_rows(cfg, &state, &rows)?;
    let mut outcomes = Vec::new();
    for row in rows {
        let carrier = state.carrier(&row.carrier_id).unwrap();
        let (class, error) = match load_carrier(&row.carrier_id, &row.image_path, row.cue_path.as_deref()) {
            Ok(input) => (Some(input.classify()), None),
            Err(e) => (None, Some(e.message)),
        };
        outcomes.push(CarrierOutcome {
            carrier_id: row.carrier_id.clone(),
            project_id: carrier.record.project_id.clone(),
            status: carrier.status,
            class,
            attempt_number: carrier.attempts,
            output_files: Vec::new(),
            output_bytes: 0,
            manual: class.is_some_and(|c| plan_for(c).is_manual()),
            error,
        });
    }
    Ok(render(&outcomes, EXIT_OK))
}
