//! ISO 9660 directory walking and file extraction.
//!
//! Only the primary volume descriptor tree is read unless [`IsoOptions::joliet`]
//! asks for the Joliet supplementary tree. Interleaved files, extended
//! attribute records and multi-extent files are reported as malformed.

mod extract;
mod walk;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{iso_extract, ExtractError, ExtractionReport, ExtractionSidecar, OutputName};
pub use walk::{iso_list, iso_list_with, iso_root_listing, primary_descriptor, VolumeDescriptorRef};

pub const SYSTEM_AREA_SECTORS: usize = 16;
pub const DESCRIPTOR_SIZE: usize = 2048;
pub const STANDARD_ID: &[u8; 5] = b"CD001";

pub const DESCRIPTOR_BOOT: u8 = 0;
pub const DESCRIPTOR_PRIMARY: u8 = 1;
pub const DESCRIPTOR_SUPPLEMENTARY: u8 = 2;
pub const DESCRIPTOR_TERMINATOR: u8 = 255;

/// Joliet UCS-2 escape sequences (levels 1-3) found at offset 88 of a
/// supplementary volume descriptor.
pub const JOLIET_ESCAPES: [&[u8; 3]; 3] = [b"%/@", b"%/C", b"%/E"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoOptions {
    /// Walk the Joliet tree (long names) when the image carries one.
    pub joliet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectoryTree {
    Primary,
    Joliet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoEntry {
    /// Forward-slash path relative to the root directory.
    pub path: String,
    pub is_directory: bool,
    pub extent_lba: u32,
    pub data_length: u32,
    /// Recording date converted to UTC; `None` when unset or out of range.
    pub recorded_at: Option<DateTime<Utc>>,
    /// The 7-byte recording date exactly as stored, hex encoded.
    pub recorded_raw: String,
    /// Set when the stored date had out-of-range fields.
    pub timestamp_flagged: bool,
    /// Set when a `;N` version suffix was removed from the name.
    pub version_suffix_stripped: bool,
}

impl IsoEntry {
    pub fn name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    pub fn depth(&self) -> usize {
        self.path.matches('/').count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsoError {
    #[error("no ISO 9660 primary volume descriptor")]
    NotIso,
    #[error("directory cycle: extent at LBA {lba} visited twice (via {path:?})")]
    Cycle { lba: u32, path: String },
    #[error("entry {entry:?} (LBA {lba}, record offset {offset}) extends past the end of the image")]
    PastEnd { entry: String, lba: u32, offset: usize },
    #[error("malformed directory record at LBA {lba}, offset {offset}: {reason}")]
    MalformedRecord {
        lba: u32,
        offset: usize,
        reason: String,
    },
    #[error("directory nesting deeper than {0} levels")]
    TooDeep(usize),
}
