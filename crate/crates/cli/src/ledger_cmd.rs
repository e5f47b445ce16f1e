use std::path::PathBuf;

use carrierforge_core::ledger::{
    processing_order, select_candidates, staffing_person_years, throughput_stats, Candidate, CarrierDetails,
    CarrierRecord, Ledger, LedgerError, LedgerRecord, LedgerSnapshot, LedgerState, Location, MonthPeriod,
    PolicyWeights, ProjectStageKind, RobotOrder, StabilizationEvent, StabilizationStatus,
};
use clap::Subcommand;
use serde_json::json;

use crate::report::{table, CliError, Report};
use crate::stabilize::read_batch_file;
use crate::CliConfig;

#[derive(Debug, Subcommand)]
pub enum LedgerCommand {
    /// Register carriers; taken identifiers get a "#N" suffix.
    Register {
        #[arg(long)]
        project: String,
        #[arg(long = "id")]
        ids: Vec<String>,
        /// Register every carrier listed in a batch CSV.
        #[arg(long)]
        from_batch: Option<PathBuf>,
        #[arg(long = "box")]
        box_id: Option<String>,
        #[arg(long)]
        order_in_box: Option<u32>,
        #[arg(long, default_value = "")]
        custodian: String,
        #[arg(long, default_value = "")]
        metadata_ref: String,
    },
    /// Record a stabilization event by hand.
    Event {
        #[arg(long)]
        carrier: String,
        /// Status label, e.g. "closed-Manual clone" or closed-manual-clone.
        #[arg(long)]
        status: StabilizationStatus,
        #[arg(long = "output")]
        outputs: Vec<String>,
        #[arg(long, default_value_t = 0)]
        bytes: u64,
        #[arg(long, default_value = "")]
        operator: String,
        #[arg(long, default_value = "")]
        hardware: String,
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        run_seconds: Option<f64>,
        #[arg(long, default_value = "")]
        comments: String,
    },
    /// Current status of a carrier.
    Status { carrier: String },
    /// Move a carrier.
    Location {
        carrier: String,
        /// Shelf, StabilizationStation, FailureInvestigation or WithCurator.
        location: Location,
    },
    /// Create or close a robot batch.
    #[command(subcommand)]
    Batch(BatchCommand),
    /// Processing order of a batch.
    Order { batch: String },
    /// Rank candidate carriers from a CSV (carrier_id,age_years,expected_bytes,demand_score).
    Select {
        candidates: PathBuf,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_risk: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_gain: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_demand: f64,
    },
    /// Throughput over whole calendar months, e.g. --month 2018-03 --months 1.
    Stats {
        #[arg(long, value_parser = parse_month)]
        month: (i32, u32),
        #[arg(long, default_value_t = 1)]
        months: u32,
    },
    /// Person-years to stabilize a collection at a yearly per-person rate.
    Staffing {
        #[arg(long)]
        total_bytes: f64,
        #[arg(long)]
        bytes_per_person_year: f64,
    },
    /// Record a project stage.
    Stage {
        #[arg(long)]
        project: String,
        /// Selected, Stabilized, CleanedUp, Extracted, Curated or ServiceCopies.
        #[arg(long)]
        stage: ProjectStageKind,
        #[arg(long, default_value = "")]
        tooling: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum BatchCommand {
    Create {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "fifo")]
        order: RobotOrder,
        /// Carriers in load order.
        #[arg(required = true)]
        carriers: Vec<String>,
    },
    Close { id: String },
}

fn parse_month(s: &str) -> Result<(i32, u32), String> {
    let (y, m) = s.split_once('-').ok_or("expected YYYY-MM")?;
    let y: i32 = y.parse().map_err(|_| "bad year")?;
    let m: u32 = m.parse().map_err(|_| "bad month")?;
    if !(1..=12).contains(&m) {
        return Err("month must be 01..12".into());
    }
    Ok((y, m))
}

/// Applies a mutation: in memory against a snapshot under --dry-run,
/// otherwise under the writer lock.
fn mutate<T>(
    cfg: &CliConfig,
    op: impl FnOnce(&mut LedgerState) -> Result<(Vec<LedgerRecord>, T), LedgerError>,
) -> Result<T, CliError> {
    if cfg.dry_run {
        let mut state = LedgerSnapshot::read(&cfg.ledger_dir)?;
        Ok(op(&mut state)?.1)
    } else {
        Ok(Ledger::open(&cfg.ledger_dir)?.transact(op)?)
    }
}

fn single(
    op: impl FnOnce(&mut LedgerState) -> Result<LedgerRecord, LedgerError>,
) -> impl FnOnce(&mut LedgerState) -> Result<(Vec<LedgerRecord>, ()), LedgerError> {
    move |s| Ok((vec![op(s)?], ()))
}

pub fn run(cfg: &CliConfig, cmd: &LedgerCommand) -> Result<Report, CliError> {
    let prefix = if cfg.dry_run { "(dry run) " } else { "" };
    match cmd {
        LedgerCommand::Register {
            project,
            ids,
            from_batch,
            box_id,
            order_in_box,
            custodian,
            metadata_ref,
        } => {
            let mut proposed = ids.clone();
            if let Some(path) = from_batch {
                proposed.extend(read_batch_file(path)?.into_iter().map(|r| r.carrier_id));
            }
            if proposed.is_empty() {
                return Err(CliError::usage("nothing to register: give --id or --from-batch"));
            }
            let details = CarrierDetails {
                box_id: box_id.clone(),
                order_in_box: *order_in_box,
                custodian: custodian.clone(),
                primary_metadata_ref: metadata_ref.clone(),
            };
            let registered: Vec<CarrierRecord> = mutate(cfg, |s| {
                let mut records = Vec::new();
                let mut carriers = Vec::new();
                for id in &proposed {
                    let (mut r, c) = s.register_carrier(project, id, details.clone())?;
                    records.append(&mut r);
                    carriers.push(c);
                }
                Ok((records, carriers))
            })?;
            let mut text = String::new();
            for (proposed, c) in proposed.iter().zip(&registered) {
                if c.disambiguation_suffix.is_some() {
                    text.push_str(&format!("{prefix}duplicate {proposed:?}: registered as {:?}\n", c.carrier_id));
                } else {
                    text.push_str(&format!("{prefix}registered {:?}\n", c.carrier_id));
                }
            }
            Ok(Report::ok(text, registered))
        }
        LedgerCommand::Event {
            carrier,
            status,
            outputs,
            bytes,
            operator,
            hardware,
            batch,
            run_seconds,
            comments,
        } => {
            let mut event = StabilizationEvent::new(carrier, *status).with_outputs(outputs.clone(), *bytes);
            event.operator = operator.clone();
            event.hardware = hardware.clone();
            event.batch_id = batch.clone();
            event.run_seconds = *run_seconds;
            event.comments = comments.clone();
            let stored = mutate(cfg, |s| {
                let record = s.record_event(event)?;
                let LedgerRecord::Stabilization { event } = &record else { unreachable!() };
                let event = event.clone();
                Ok((vec![record], event))
            })?;
            Ok(Report::ok(
                format!("{prefix}{carrier}: attempt {} {}\n", stored.attempt_number, stored.status),
                stored,
            ))
        }
        LedgerCommand::Status { carrier } => {
            let state = LedgerSnapshot::read(&cfg.ledger_dir)?;
            let c = state
                .carrier(carrier)
                .ok_or_else(|| CliError::usage(format!("unknown carrier {carrier:?}")))?;
            let text = format!(
                "{}  {}  {}  attempts={}\n",
                c.record.carrier_id, c.status, c.record.location, c.attempts
            );
            Ok(Report::ok(text, json!({ "carrier": c.record, "status": c.status, "label": c.status.label(), "attempts": c.attempts })))
        }
        LedgerCommand::Location { carrier, location } => {
            mutate(cfg, single(|s| s.set_location(carrier, *location)))?;
            Ok(Report::ok(
                format!("{prefix}{carrier} -> {location}\n"),
                json!({ "carrier_id": carrier, "location": location }),
            ))
        }
        LedgerCommand::Batch(BatchCommand::Create { id, order, carriers }) => {
            mutate(cfg, single(|s| s.create_batch(id, carriers.clone(), *order, cfg.batch_size_limit)))?;
            Ok(Report::ok(
                format!("{prefix}batch {id}: {} carriers, {order:?}\n", carriers.len()),
                json!({ "batch_id": id, "carrier_ids": carriers, "robot_order": order }),
            ))
        }
        LedgerCommand::Batch(BatchCommand::Close { id }) => {
            mutate(cfg, single(|s| s.close_batch(id)))?;
            Ok(Report::ok(format!("{prefix}batch {id} closed\n"), json!({ "batch_id": id, "open": false })))
        }
        LedgerCommand::Order { batch } => {
            let state = LedgerSnapshot::read(&cfg.ledger_dir)?;
            let b = state
                .batch(batch)
                .ok_or_else(|| CliError::usage(format!("unknown batch {batch:?}")))?;
            let order = processing_order(b)?;
            let text: String = order.iter().enumerate().map(|(i, id)| format!("{}\t{id}\n", i + 1)).collect();
            Ok(Report::ok(text, json!({ "batch_id": batch, "robot_order": b.robot_order, "order": order })))
        }
        LedgerCommand::Select {
            candidates,
            w_risk,
            w_gain,
            w_demand,
        } => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(candidates)
                .map_err(|e| CliError::usage(format!("{}: {e}", candidates.display())))?;
            let rows: Vec<Candidate> = reader
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::usage(format!("{}: {e}", candidates.display())))?;
            let weights = PolicyWeights {
                risk: *w_risk,
                gain: *w_gain,
                demand: *w_demand,
            };
            let ranked = select_candidates(&rows, weights)?;
            let text_rows: Vec<Vec<String>> = ranked
                .iter()
                .map(|r| vec![r.rank.to_string(), r.carrier_id.clone(), format!("{:.4}", r.score)])
                .collect();
            Ok(Report::ok(table(&["RANK", "CARRIER", "SCORE"], &text_rows), ranked))
        }
        LedgerCommand::Stats { month, months } => {
            let state = LedgerSnapshot::read(&cfg.ledger_dir)?;
            let period = MonthPeriod {
                year: month.0,
                month: month.1,
                months: *months,
            };
            let stats = throughput_stats(state.events(), period)?;
            let avg = stats
                .avg_bytes_per_carrier
                .map(|a| format!("{a:.0}"))
                .unwrap_or_else(|| "absent".into());
            let text = format!(
                "{:04}-{:02} +{} months: {:.2} carriers/month, {:.0} bytes/month, avg bytes/carrier {avg}\n",
                month.0, month.1, months, stats.carriers_per_month, stats.bytes_per_month
            );
            Ok(Report::ok(text, stats))
        }
        LedgerCommand::Staffing {
            total_bytes,
            bytes_per_person_year,
        } => {
            if *bytes_per_person_year <= 0.0 || *total_bytes < 0.0 {
                return Err(CliError::usage("byte counts must be positive"));
            }
            let years = staffing_person_years(*total_bytes, *bytes_per_person_year);
            Ok(Report::ok(format!("{years} person-years\n"), json!({ "person_years": years })))
        }
        LedgerCommand::Stage { project, stage, tooling } => {
            mutate(cfg, single(|s| s.advance_stage(project, *stage, tooling)))?;
            Ok(Report::ok(
                format!("{prefix}{project}: {stage}\n"),
                json!({ "project_id": project, "stage": stage, "tooling": tooling }),
            ))
        }
    }
}
