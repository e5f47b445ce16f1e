use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layout::{is_metadata_file, DERIVED_DIR, DUPLICATE_PREFIX};
use super::{io_err, PipelineError};
use crate::fixity::{
    manifest_verify, read_collection_manifest, sha256_file, sha256_hex, write_collection_manifest,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub batches: Vec<PathBuf>,
    /// Paths newly copied into the project root.
    pub copied: Vec<String>,
    /// Paths already present with identical content.
    pub already_present: Vec<String>,
    pub manifest_path: PathBuf,
    pub manifest_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeRecord {
    pub kept_path: String,
    pub duplicate_paths: Vec<String>,
    pub digest: String,
}

/// Unifies verified batch trees under `project_root` and writes the
/// consolidated manifest. Nothing is copied if any collision conflicts.
pub fn merge_batches(batch_roots: &[PathBuf], project_root: &Path) -> Result<MergeReport, PipelineError> {
    merge(batch_roots, project_root, true)
}

/// Runs every check of [`merge_batches`] and reports what it would copy,
/// without touching `project_root`.
pub fn plan_merge(batch_roots: &[PathBuf], project_root: &Path) -> Result<MergeReport, PipelineError> {
    merge(batch_roots, project_root, false)
}

fn merge(batch_roots: &[PathBuf], project_root: &Path, apply: bool) -> Result<MergeReport, PipelineError> {
    // path -> (digest, source root)
    let mut plan: BTreeMap<String, (String, PathBuf)> = BTreeMap::new();
    for root in batch_roots {
        let manifest = read_collection_manifest(root)?;
        let report = manifest_verify(&manifest, root);
        if !report.is_clean() {
            return Err(PipelineError::UnverifiedBatch {
                root: root.clone(),
                problems: report.problem_paths().len(),
            });
        }
        for entry in manifest.entries {
            match plan.get(&entry.path) {
                Some((digest, _)) if *digest == entry.digest => {}
                Some((_, first)) => {
                    return Err(PipelineError::MergeConflict {
                        path: entry.path,
                        first: first.clone(),
                        second: root.clone(),
                    })
                }
                None => {
                    plan.insert(entry.path, (entry.digest, root.clone()));
                }
            }
        }
    }

    let mut copied = Vec::new();
    let mut already_present = Vec::new();
    for (path, (digest, source)) in &plan {
        let target = project_root.join(path);
        if target.exists() {
            if sha256_file(&target).map_err(io_err(&target))? != *digest {
                return Err(PipelineError::MergeConflict {
                    path: path.clone(),
                    first: project_root.to_path_buf(),
                    second: source.clone(),
                });
            }
            already_present.push(path.clone());
        } else {
            copied.push(path.clone());
        }
    }

    let manifest_path = project_root.join(crate::fixity::COLLECTION_MANIFEST_NAME);
    if !apply {
        return Ok(MergeReport {
            batches: batch_roots.to_vec(),
            copied,
            already_present,
            manifest_path,
            manifest_entries: plan.len(),
        });
    }
    for path in &copied {
        let (_, source) = &plan[path];
        let target = project_root.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::copy(source.join(path), &target).map_err(io_err(&target))?;
    }
    fs::create_dir_all(project_root).map_err(io_err(project_root))?;
    let manifest = write_collection_manifest(project_root)?;
    Ok(MergeReport {
        batches: batch_roots.to_vec(),
        copied,
        already_present,
        manifest_path,
        manifest_entries: manifest.entries.len(),
    })
}

/// Groups the files of `root` by digest using its consolidated manifest and,
/// when `apply` is set, replaces every duplicate with a link record naming
/// the lexicographically smallest path. Empty files, link records and
/// per-carrier metadata files are never grouped.
pub fn dedupe(root: &Path, apply: bool) -> Result<Vec<DedupeRecord>, PipelineError> {
    let manifest = read_collection_manifest(root)?;
    let report = manifest_verify(&manifest, root);
    if let Some(path) = report.problem_paths().into_iter().next() {
        return Err(PipelineError::StaleManifest {
            root: root.to_path_buf(),
            path: path.to_owned(),
        });
    }

    let empty = sha256_hex(&[]);
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for entry in &manifest.entries {
        if entry.digest != empty && !is_carrier_metadata(&entry.path) {
            groups.entry(&entry.digest).or_default().push(&entry.path);
        }
    }
    let mut records = Vec::new();
    for (digest, paths) in groups {
        if paths.len() < 2 || is_link_record(&root.join(paths[0]))? {
            continue;
        }
        let mut paths = paths;
        paths.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
        records.push(DedupeRecord {
            kept_path: paths[0].to_owned(),
            duplicate_paths: paths[1..].iter().map(|p| p.to_string()).collect(),
            digest: digest.to_owned(),
        });
    }
    records.sort_by(|a, b| a.kept_path.cmp(&b.kept_path));

    if apply && !records.is_empty() {
        for record in &records {
            let link = format!("{DUPLICATE_PREFIX}{}\n", record.kept_path);
            for dup in &record.duplicate_paths {
                let path = root.join(dup);
                fs::write(&path, link.as_bytes()).map_err(io_err(&path))?;
            }
        }
        write_collection_manifest(root)?;
    }
    Ok(records)
}

/// `derived/<carrier>/<metadata file>`.
fn is_carrier_metadata(path: &str) -> bool {
    let mut parts = path.splitn(3, '/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(DERIVED_DIR), Some(_), Some(rest)) => is_metadata_file(rest),
        _ => false,
    }
}

fn is_link_record(path: &Path) -> Result<bool, PipelineError> {
    let len = fs::metadata(path).map_err(io_err(path))?.len();
    if len > 4096 {
        return Ok(false);
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(bytes.starts_with(DUPLICATE_PREFIX.as_bytes()) && bytes.iter().filter(|&&b| b == b'\n').count() <= 1)
}
