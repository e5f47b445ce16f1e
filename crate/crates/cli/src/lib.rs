//! The `carrierforge` command line: identification, stabilization, fixity
//! and ledger commands over the core library.

mod fixity_cmd;
mod forge_cmd;
mod identify;
mod ledger_cmd;
pub mod report;
mod stabilize;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use carrierforge_core::ledger::DEFAULT_BATCH_SIZE_LIMIT;

pub use report::{CliError, Report, EXIT_CONTENT, EXIT_OK, EXIT_USAGE};

pub const LEDGER_ENV: &str = "CARRIERFORGE_LEDGER";

#[derive(Debug, Parser)]
#[command(name = "carrierforge", version, about = "Optical carrier stabilization toolkit")]
pub struct Cli {
    /// Ledger directory. The CARRIERFORGE_LEDGER environment variable takes
    /// precedence.
    #[arg(long, global = true, default_value = "ledger")]
    pub ledger_dir: PathBuf,
    /// Root under which project output trees are written.
    #[arg(long, global = true, default_value = ".")]
    pub output_root: PathBuf,
    /// Carriers stabilized concurrently.
    #[arg(long, global = true, default_value_t = 2)]
    pub workers: usize,
    #[arg(long, global = true, default_value_t = DEFAULT_BATCH_SIZE_LIMIT)]
    pub batch_size_limit: usize,
    /// Report what would happen without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect file systems and classify disk images or cue sheets.
    Identify {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Stabilize the carriers listed in a batch CSV (carrier_id,image_path,cue_path).
    Stabilize(stabilize::StabilizeArgs),
    /// Verify a collection root against its manifest, or a bag.
    Verify { root: PathBuf },
    /// Package a directory as a bag.
    Bag { root: PathBuf, destination: PathBuf },
    /// Merge verified batch trees into a project root.
    Merge {
        #[arg(required = true, num_args = 1..)]
        batches: Vec<PathBuf>,
        #[arg(long)]
        into: PathBuf,
    },
    /// Find byte-identical files; with --apply, replace duplicates by link records.
    Dedupe {
        root: PathBuf,
        #[arg(long)]
        apply: bool,
    },
    /// Rewrite a foreign checksum manifest in canonical form.
    Normalize {
        manifest: PathBuf,
        /// Destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["auto", "utf8", "latin1"], default_value = "auto")]
        encoding: String,
        /// Treat backslashes as literal path characters.
        #[arg(long)]
        literal_backslashes: bool,
    },
    /// Stabilization metadata.
    #[command(subcommand)]
    Ledger(ledger_cmd::LedgerCommand),
    /// Write synthetic carriers for testing.
    Forge(forge_cmd::ForgeArgs),
}

/// Settings shared by all commands, with paths made absolute.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub ledger_dir: PathBuf,
    pub output_root: PathBuf,
    pub batch_size_limit: usize,
    pub parallel_workers: usize,
    pub dry_run: bool,
}

impl CliConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        if cli.workers == 0 || cli.batch_size_limit == 0 {
            return Err(CliError::usage("--workers and --batch-size-limit must be positive"));
        }
        let ledger_dir = match std::env::var_os(LEDGER_ENV).filter(|v| !v.is_empty()) {
            Some(dir) => PathBuf::from(dir),
            None => cli.ledger_dir.clone(),
        };
        Ok(CliConfig {
            ledger_dir: absolute(&ledger_dir)?,
            output_root: absolute(&cli.output_root)?,
            batch_size_limit: cli.batch_size_limit,
            parallel_workers: cli.workers,
            dry_run: cli.dry_run,
        })
    }
}

pub(crate) fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    let cfg = CliConfig::from_cli(cli)?;
    match &cli.command {
        Command::Identify { paths } => identify::run(paths),
        Command::Stabilize(args) => stabilize::run(&cfg, args),
        Command::Verify { root } => fixity_cmd::verify(root),
        Command::Bag { root, destination } => fixity_cmd::bag(&cfg, root, destination),
        Command::Merge { batches, into } => fixity_cmd::merge(&cfg, batches, into),
        Command::Dedupe { root, apply } => fixity_cmd::dedupe(&cfg, root, *apply),
        Command::Normalize {
            manifest,
            out,
            encoding,
            literal_backslashes,
        } => fixity_cmd::normalize(&cfg, manifest, out.as_deref(), encoding, *literal_backslashes),
        Command::Ledger(cmd) => ledger_cmd::run(&cfg, cmd),
        Command::Forge(args) => forge_cmd::run(&cfg, args),
    }
}

/// Parses `args`, runs the command and writes its output. Returns the exit
/// code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let _ = if cli.json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report.json).unwrap())
            } else {
                stdout.write_all(report.text.as_bytes())
            };
            report.code
        }
        Err(e) => {
            if cli.json {
                let body = serde_json::json!({ "error": e.message, "exit_code": e.code });
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&body).unwrap());
            }
            let _ = writeln!(stderr, "error: {e}");
            e.code
        }
    }
}
