use std::fs;
use std::path::{Path, PathBuf};

use carrierforge_core::fixity::{
    bag_pack, bag_verify, manifest_create, manifest_normalize, manifest_verify, read_collection_manifest,
    DeclaredConventions, ManifestEncoding, VerificationReport, COLLECTION_MANIFEST_NAME,
};
use carrierforge_core::pipeline::{dedupe as dedupe_root, merge_batches, plan_merge};
use serde::Serialize;
use serde_json::json;

use crate::report::{table, CliError, Report, EXIT_CONTENT, EXIT_OK};
use crate::CliConfig;

#[derive(Debug, Serialize)]
struct VerifyJson<'a> {
    root: String,
    kind: &'a str,
    clean: bool,
    verified: usize,
    mismatched: &'a [carrierforge_core::fixity::Mismatch],
    missing: &'a [String],
    extra: &'a [String],
}

pub fn verify(root: &Path) -> Result<Report, CliError> {
    let (kind, report): (&str, VerificationReport) = if root.join("bagit.txt").is_file() {
        ("bag", bag_verify(root)?)
    } else if root.join(COLLECTION_MANIFEST_NAME).is_file() {
        ("collection", manifest_verify(&read_collection_manifest(root)?, root))
    } else {
        return Err(CliError::usage(format!(
            "{} holds neither a bag nor {COLLECTION_MANIFEST_NAME}",
            root.display()
        )));
    };
    let clean = report.is_clean();
    let mut text = String::new();
    for m in &report.mismatched {
        text.push_str(&format!("MISMATCH {}\n", m.path));
    }
    for p in &report.missing {
        text.push_str(&format!("MISSING {p}\n"));
    }
    for p in &report.extra {
        text.push_str(&format!("EXTRA {p}\n"));
    }
    text.push_str(&format!(
        "{} {}: {} verified, {} problems\n",
        if clean { "OK" } else { "FAILED" },
        root.display(),
        report.ok.len(),
        report.problem_paths().len()
    ));
    let body = VerifyJson {
        root: root.display().to_string(),
        kind,
        clean,
        verified: report.ok.len(),
        mismatched: &report.mismatched,
        missing: &report.missing,
        extra: &report.extra,
    };
    Ok(Report::new(if clean { EXIT_OK } else { EXIT_CONTENT }, text, body))
}

pub fn bag(cfg: &CliConfig, root: &Path, destination: &Path) -> Result<Report, CliError> {
    if cfg.dry_run {
        let manifest = manifest_create(root)?;
        let n = manifest.entries.len();
        return Ok(Report::ok(
            format!("would pack {n} files from {} into {}\n", root.display(), destination.display()),
            json!({ "dry_run": true, "bag": destination.display().to_string(), "files": n }),
        ));
    }
    let bag = bag_pack(root, destination)?;
    let report = bag_verify(&bag)?;
    if !report.is_clean() {
        return Err(CliError::content(format!("bag {} failed re-verification", bag.display())));
    }
    Ok(Report::ok(
        format!("packed {} files into {}\n", report.ok.len(), bag.display()),
        json!({ "dry_run": false, "bag": bag.display().to_string(), "files": report.ok.len() }),
    ))
}

pub fn merge(cfg: &CliConfig, batches: &[PathBuf], into: &Path) -> Result<Report, CliError> {
    let report = if cfg.dry_run {
        plan_merge(batches, into)?
    } else {
        merge_batches(batches, into)?
    };
    let verb = if cfg.dry_run { "would copy" } else { "copied" };
    let text = format!(
        "{verb} {} files, {} already present; manifest {} ({} entries)\n",
        report.copied.len(),
        report.already_present.len(),
        report.manifest_path.display(),
        report.manifest_entries
    );
    Ok(Report::ok(text, json!({ "dry_run": cfg.dry_run, "report": report })))
}

pub fn dedupe(cfg: &CliConfig, root: &Path, apply: bool) -> Result<Report, CliError> {
    let apply = apply && !cfg.dry_run;
    let records = dedupe_root(root, apply)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .flat_map(|r| {
            r.duplicate_paths
                .iter()
                .map(|d| vec![r.kept_path.clone(), d.clone(), r.digest[..16].to_owned()])
        })
        .collect();
    let mut text = table(&["KEPT", "DUPLICATE", "DIGEST"], &rows);
    text.push_str(&format!(
        "{} duplicate groups{}\n",
        records.len(),
        if apply { ", duplicates replaced by link records" } else { " (dry run)" }
    ));
    Ok(Report::ok(text, json!({ "applied": apply, "records": records })))
}

pub fn normalize(
    cfg: &CliConfig,
    manifest: &Path,
    out: Option<&Path>,
    encoding: &str,
    literal_backslashes: bool,
) -> Result<Report, CliError> {
    let raw = fs::read(manifest).map_err(|e| CliError::usage(format!("{}: {e}", manifest.display())))?;
    let conventions = DeclaredConventions {
        encoding: match encoding {
            "utf8" => ManifestEncoding::Utf8,
            "latin1" => ManifestEncoding::Latin1,
            _ => ManifestEncoding::Auto,
        },
        backslash_separators: !literal_backslashes,
    };
    let (canonical, log) = manifest_normalize(&raw, conventions)?;
    let text = canonical.to_text();
    let body = json!({ "entries": canonical.entries, "transforms": log });
    match out {
        Some(path) if !cfg.dry_run => {
            fs::write(path, &text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            Ok(Report::ok(
                format!("wrote {} entries to {} ({} transforms)\n", canonical.entries.len(), path.display(), log.len()),
                body,
            ))
        }
        _ => Ok(Report::ok(text, body)),
    }
}
