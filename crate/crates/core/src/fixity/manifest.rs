use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Component, Path};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{is_sha256_hex, sha256_file, FixityError};

/// Name of the collection-level manifest kept at a collection root. It is
/// never listed in the manifest it belongs to.
pub const COLLECTION_MANIFEST_NAME: &str = "manifest-sha256.txt";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecksumManifest {
    pub root: String,
    pub entries: Vec<ManifestEntry>,
    pub created_at: DateTime<Utc>,
    pub algorithm: String,
}

impl ChecksumManifest {
    /// Builds a manifest, sorting entries and rejecting duplicates or
    /// non-canonical digests.
    pub fn from_entries(root: impl Into<String>, mut entries: Vec<ManifestEntry>) -> Result<Self, FixityError> {
        entries.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[0].path == pair[1].path {
                return Err(FixityError::DuplicatePath {
                    line: i + 2,
                    path: pair[1].path.clone(),
                });
            }
        }
        for (i, e) in entries.iter().enumerate() {
            if !is_sha256_hex(&e.digest) {
                return Err(FixityError::Parse {
                    line: i + 1,
                    message: format!("digest {:?} is not 64 lowercase hex characters", e.digest),
                });
            }
            if e.path.is_empty() || e.path.contains(['\n', '\r']) {
                return Err(FixityError::Parse {
                    line: i + 1,
                    message: format!("unusable path {:?}", e.path),
                });
            }
        }
        Ok(ChecksumManifest {
            root: root.into(),
            entries,
            created_at: Utc::now(),
            algorithm: "sha256".into(),
        })
    }

    /// Canonical file form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.digest);
            out.push(' ');
            out.push_str(&e.path);
            out.push('\n');
        }
        out
    }

    /// Strict parser for the canonical form; foreign manifests go through
    /// [`super::manifest_normalize`] instead.
    pub fn from_text(root: impl Into<String>, text: &str) -> Result<Self, FixityError> {
        let mut entries = Vec::new();
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(FixityError::Parse {
                line: text.lines().count(),
                message: "missing final line feed".into(),
            });
        }
        for (idx, line) in text.split_terminator('\n').enumerate() {
            let line_no = idx + 1;
            let parse_err = |message: &str| FixityError::Parse {
                line: line_no,
                message: message.to_owned(),
            };
            let (digest, path) = line
                .split_once(' ')
                .ok_or_else(|| parse_err("expected \"<digest> <path>\""))?;
            if !is_sha256_hex(digest) {
                return Err(parse_err("digest is not 64 lowercase hex characters"));
            }
            if path.is_empty() || path.contains('\r') {
                return Err(parse_err("empty or CR-terminated path"));
            }
            entries.push(ManifestEntry {
                path: path.to_owned(),
                digest: digest.to_owned(),
            });
        }
        if let Some(i) = entries
            .windows(2)
            .position(|w| w[0].path.as_bytes() >= w[1].path.as_bytes())
        {
            return Err(FixityError::Parse {
                line: i + 2,
                message: "entries are not in strictly increasing byte order".into(),
            });
        }
        Self::from_entries(root, entries)
    }

    pub fn paths(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.path.as_str()).collect()
    }

    pub fn digest_of(&self, path: &str) -> Option<&str> {
        self.entries
            .binary_search_by(|e| e.path.as_bytes().cmp(path.as_bytes()))
            .ok()
            .map(|i| self.entries[i].digest.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub path: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ok: Vec<String>,
    pub mismatched: Vec<Mismatch>,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty() && self.extra.is_empty()
    }

    /// Every path reported as a problem.
    pub fn problem_paths(&self) -> BTreeSet<&str> {
        self.mismatched
            .iter()
            .map(|m| m.path.as_str())
            .chain(self.missing.iter().map(String::as_str))
            .chain(self.extra.iter().map(String::as_str))
            .collect()
    }
}

/// Relative, forward-slash form of `path` under `root`.
pub(crate) fn relative_manifest_path(root: &Path, path: &Path) -> Result<String, FixityError> {
    let rel = path
        .strip_prefix(root)
        .map_err(|_| FixityError::UnrepresentablePath(path.to_path_buf()))?;
    let mut parts = Vec::new();
    for component in rel.components() {
        match component {
            Component::Normal(part) => {
                let part = part
                    .to_str()
                    .filter(|p| !p.contains(['\n', '\r', '\\']))
                    .ok_or_else(|| FixityError::UnrepresentablePath(path.to_path_buf()))?;
                parts.push(part);
            }
            _ => return Err(FixityError::UnrepresentablePath(path.to_path_buf())),
        }
    }
    Ok(parts.join("/"))
}

/// Regular files under `dir` (relative to `root`), skipping the collection
/// manifest at the top of `root`. Symlinks are not followed.
pub(crate) fn list_files(root: &Path, dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>, FixityError> {
    let mut files = Vec::new();
    for item in WalkDir::new(dir).follow_links(false).sort_by_file_name() {
        let item = item.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            FixityError::Io {
                path,
                source: e.into_io_error().unwrap_or_else(|| io::Error::other("walk error")),
            }
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let rel = relative_manifest_path(root, item.path())?;
        if rel == COLLECTION_MANIFEST_NAME {
            continue;
        }
        files.push((rel, item.into_path()));
    }
    Ok(files)
}

/// Hashes every regular file under `root` in binary mode.
pub fn manifest_create(root: &Path) -> Result<ChecksumManifest, FixityError> {
    if !root.is_dir() {
        return Err(FixityError::Io {
            path: root.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "collection root is not a directory"),
        });
    }
    let files = list_files(root, root)?;
    let entries = files
        .par_iter()
        .map(|(rel, path)| {
            sha256_file(path)
                .map(|digest| ManifestEntry {
                    path: rel.clone(),
                    digest,
                })
                .map_err(FixityError::io(path))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ChecksumManifest::from_entries(root.display().to_string(), entries)
}

/// Creates the manifest of `root` and stores it as `root/manifest-sha256.txt`.
pub fn write_collection_manifest(root: &Path) -> Result<ChecksumManifest, FixityError> {
    let manifest = manifest_create(root)?;
    let path = root.join(COLLECTION_MANIFEST_NAME);
    std::fs::write(&path, manifest.to_text()).map_err(FixityError::io(&path))?;
    Ok(manifest)
}

/// Reads `root/manifest-sha256.txt`.
pub fn read_collection_manifest(root: &Path) -> Result<ChecksumManifest, FixityError> {
    let path = root.join(COLLECTION_MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(FixityError::io(&path))?;
    ChecksumManifest::from_text(root.display().to_string(), &text)
}

/// Re-hashes the files named by `manifest` under `root` and looks for files
/// the manifest does not know about.
pub fn manifest_verify(manifest: &ChecksumManifest, root: &Path) -> VerificationReport {
    verify_entries(&manifest.entries, root, root)
}

/// Verification core shared with bags: entry paths are relative to `root`;
/// only files under `scope` count as extra.
pub fn verify_entries(entries: &[ManifestEntry], root: &Path, scope: &Path) -> VerificationReport {
    enum Outcome {
        Ok,
        Mismatch(String),
        Missing,
    }
    let outcomes: Vec<Outcome> = entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.path);
            if !path.is_file() {
                return Outcome::Missing;
            }
            match sha256_file(&path) {
                Ok(actual) if actual == e.digest => Outcome::Ok,
                Ok(actual) => Outcome::Mismatch(actual),
                Err(_) => Outcome::Missing,
            }
        })
        .collect();

    let mut report = VerificationReport::default();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Outcome::Ok => report.ok.push(entry.path.clone()),
            Outcome::Mismatch(actual) => report.mismatched.push(super::Mismatch {
                path: entry.path.clone(),
                expected: entry.digest.clone(),
                actual,
            }),
            Outcome::Missing => report.missing.push(entry.path.clone()),
        }
    }

    let known: BTreeMap<&str, ()> = entries.iter().map(|e| (e.path.as_str(), ())).collect();
    match list_files(root, scope) {
        Ok(files) => {
            report.extra = files
                .into_iter()
                .map(|(rel, _)| rel)
                .filter(|rel| !known.contains_key(rel.as_str()))
                .collect();
        }
        Err(FixityError::UnrepresentablePath(p)) => report.extra.push(p.display().to_string()),
        Err(_) => {}
    }
    report
}
