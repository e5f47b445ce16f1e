use std::path::{Path, PathBuf};

use carrierforge_core::classify::{identify, Identification};
use carrierforge_core::pipeline::CarrierInput;
use serde::Serialize;

use crate::report::{table, CliError, Report};

#[derive(Debug, Serialize)]
struct IdentifyRow {
    path: String,
    #[serde(flatten)]
    identification: Identification,
    manual: bool,
}

fn is_cue(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("cue"))
}

/// Loads a carrier the way `stabilize` would: a cue sheet brings its source
/// files along, anything else is a bare image.
pub(crate) fn load_carrier(carrier_id: &str, image: &Path, cue: Option<&Path>) -> Result<CarrierInput, CliError> {
    CarrierInput::load(carrier_id, image, cue).map_err(CliError::usage)
}

fn cue_image(cue: &Path) -> Result<PathBuf, CliError> {
    let text = std::fs::read(cue).map_err(|e| CliError::usage(format!("{}: {e}", cue.display())))?;
    let sheet = carrierforge_core::sector::parse_cue_bytes(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", cue.display())))?;
    let first = sheet.source_files.first().ok_or_else(|| CliError::usage("cue sheet names no file"))?;
    Ok(cue.parent().unwrap_or(Path::new(".")).join(first))
}

pub fn run(paths: &[PathBuf]) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    for path in paths {
        let input = if is_cue(path) {
            load_carrier("identify", &cue_image(path)?, Some(path))?
        } else {
            load_carrier("identify", path, None)?
        };
        let identification = identify(&input.image, input.cue.as_ref(), &input.files);
        rows.push(IdentifyRow {
            path: path.display().to_string(),
            manual: identification.plan.is_manual(),
            identification,
        });
    }
    let text_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let families: Vec<String> = r
                .identification
                .families
                .iter()
                .map(|f| format!("{:?}", f.family))
                .collect();
            let plan = if r.manual {
                "manual".to_owned()
            } else {
                r.identification
                    .plan
                    .steps
                    .iter()
                    .map(|s| format!("{s:?}"))
                    .collect::<Vec<_>>()
                    .join(" > ")
            };
            vec![
                r.path.clone(),
                if families.is_empty() { "-".into() } else { families.join(",") },
                r.identification.class.to_string(),
                plan,
            ]
        })
        .collect();
    Ok(Report::ok(table(&["PATH", "FAMILIES", "CLASS", "PLAN"], &text_rows), rows))
}
