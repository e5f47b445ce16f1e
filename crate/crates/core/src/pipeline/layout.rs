//! Directory naming conventions for a project's output tree.
//!
//! ```text
//! <project>/masters/<carrier>/   disk images exactly as received
//! <project>/derived/<carrier>/   content extracted from the images
//! <project>/native/<carrier>/    sibling submissions (e.g. hard drives)
//! <project>/failed/<carrier>/    quarantined partial output of failed runs
//! ```
//!
//! Inside a carrier's derived directory, files extracted from a single data
//! image live under `files/`; split tracks are named `trackNN.wav` or, for
//! data tracks, `trackNN/files/`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const MASTERS_DIR: &str = "masters";
pub const DERIVED_DIR: &str = "derived";
pub const NATIVE_DIR: &str = "native";
pub const FAILED_DIR: &str = "failed";
pub const FILES_DIR: &str = "files";
pub const MANUAL_MARKER_NAME: &str = "MANUAL.txt";
pub const MANUAL_PREFIX: &str = "MANUAL:";
pub const DUPLICATE_PREFIX: &str = "DUPLICATE-OF:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// The disk image itself.
    Master,
    /// Content derived from images.
    DerivedFromImages,
    /// Content submitted alongside the carriers, not derived from them.
    SiblingSubmission,
}

pub fn validate_identifier(id: &str) -> Result<(), PipelineError> {
    if id.is_empty() || id == "." || id.contains(['/', '\\', '\0']) || id.contains("..") {
        return Err(PipelineError::InvalidIdentifier(id.to_owned()));
    }
    Ok(())
}

/// Directory name for a carrier identifier. Ledger identifiers may contain
/// separators (`EAP256/1/1`); those and `%` are percent-encoded so distinct
/// identifiers never share a directory.
pub fn directory_name(carrier_id: &str) -> String {
    let mut out = String::with_capacity(carrier_id.len());
    for c in carrier_id.chars() {
        match c {
            '/' => out.push_str("%2F"),
            '\\' => out.push_str("%5C"),
            '%' => out.push_str("%25"),
            _ => out.push(c),
        }
    }
    out
}

pub fn layout_path(project_id: &str, carrier_id: &str, relation: Relation) -> Result<PathBuf, PipelineError> {
    validate_identifier(project_id)?;
    validate_identifier(carrier_id)?;
    let root = match relation {
        Relation::Master => MASTERS_DIR,
        Relation::DerivedFromImages => DERIVED_DIR,
        Relation::SiblingSubmission => NATIVE_DIR,
    };
    Ok([project_id, root, carrier_id].iter().collect())
}

pub fn track_wav_name(number: u8) -> String {
    format!("track{number:02}.wav")
}

pub fn track_files_dir(number: u8) -> String {
    format!("track{number:02}/{FILES_DIR}")
}

pub fn track_sidecar_name(number: u8) -> String {
    format!("track{number:02}.extraction.json")
}

pub const IMAGE_SIDECAR_NAME: &str = "extraction.json";
pub const TRACKS_SIDECAR_NAME: &str = "tracks.json";

/// True for files the pipeline writes about content rather than content
/// itself: extraction sidecars and the manual marker. `relative` is a path
/// inside a carrier's derived directory.
pub fn is_metadata_file(relative: &str) -> bool {
    !relative.contains('/')
        && (relative == IMAGE_SIDECAR_NAME
            || relative == TRACKS_SIDECAR_NAME
            || relative == MANUAL_MARKER_NAME
            || (relative.starts_with("track") && relative.ends_with(".extraction.json")))
}
