use std::fs;
use std::path::{Path, PathBuf};

use carrierforge_core::forge::corpus::corpus;
use carrierforge_core::forge::{forge, ForgeSpec};
use clap::Args;
use serde::Serialize;

use crate::report::{CliError, Report};
use crate::CliConfig;

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct ForgeArgs {
    /// JSON file holding one spec or a list of specs.
    #[arg(long, group = "source")]
    pub spec: Option<PathBuf>,
    /// Use the built-in fixture corpus.
    #[arg(long, group = "source")]
    pub corpus: bool,
    /// Only the first N specs.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Destination directory; receives one subdirectory per carrier plus
    /// batch.csv and expected.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Forged {
    carrier_id: String,
    kind: String,
    image_path: String,
    cue_path: Option<String>,
    bytes: usize,
}

fn load_specs(args: &ForgeArgs) -> Result<Vec<ForgeSpec>, CliError> {
    let mut specs = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let parsed = if value.is_array() {
                serde_json::from_value(value)
            } else {
                serde_json::from_value(value).map(|s| vec![s])
            };
            parsed.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => corpus(),
    };
    if let Some(n) = args.limit {
        specs.truncate(n);
    }
    Ok(specs)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::usage(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn run(cfg: &CliConfig, args: &ForgeArgs) -> Result<Report, CliError> {
    let specs = load_specs(args)?;
    let mut forged = Vec::new();
    let mut artifacts = Vec::new();
    for spec in &specs {
        let artifact = forge(spec).map_err(|e| CliError::usage(format!("spec {:?}: {e}", spec.name)))?;
        let image_path = format!("{}/{}", spec.name, artifact.truth.image_name);
        let cue_path = artifact.truth.cue_name.as_ref().map(|c| format!("{}/{c}", spec.name));
        forged.push(Forged {
            carrier_id: spec.name.clone(),
            kind: artifact.truth.kind.to_string(),
            image_path,
            cue_path,
            bytes: artifact.image.len(),
        });
        artifacts.push(artifact);
    }
    let mut names: Vec<&str> = forged.iter().map(|f| f.carrier_id.as_str()).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::usage("spec names must be unique"));
    }

    if !cfg.dry_run {
        let mut batch = csv::Writer::from_writer(Vec::new());
        let mut expected = csv::Writer::from_writer(Vec::new());
        batch.write_record(["carrier_id", "image_path", "cue_path"]).unwrap();
        expected.write_record(["carrier_id", "kind"]).unwrap();
        for (f, a) in forged.iter().zip(&artifacts) {
            write(&args.out.join(&f.image_path), &a.image)?;
            if let (Some(cue_path), Some(cue)) = (&f.cue_path, &a.cue) {
                write(&args.out.join(cue_path), cue.as_bytes())?;
            }
            let cue = f.cue_path.clone().unwrap_or_default();
            batch.write_record([f.carrier_id.as_str(), f.image_path.as_str(), cue.as_str()]).unwrap();
            expected.write_record([f.carrier_id.as_str(), f.kind.as_str()]).unwrap();
        }
        write(&args.out.join("batch.csv"), &batch.into_inner().unwrap())?;
        write(&args.out.join("expected.csv"), &expected.into_inner().unwrap())?;
    }
    let verb = if cfg.dry_run { "would write" } else { "wrote" };
    Ok(Report::ok(
        format!("{verb} {} carriers to {}\n", forged.len(), args.out.display()),
        forged,
    ))
}
