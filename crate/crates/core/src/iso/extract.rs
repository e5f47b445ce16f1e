use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::walk::select_volume;
use super::{iso_list_with, DirectoryTree, IsoEntry, IsoError, IsoOptions};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Iso(#[from] IsoError),
    #[error("refusing to overwrite existing path {0}")]
    Collision(PathBuf),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub files_written: u64,
    pub bytes_written: u64,
    pub tree: DirectoryTree,
    pub entries: Vec<IsoEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputName {
    pub name: String,
    pub extension: String,
}

/// JSON document written next to an extracted tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionSidecar {
    pub image_sha256: String,
    pub tree: DirectoryTree,
    /// On-disc names are kept exactly as recorded (8.3 upper case included).
    pub name_case: String,
    pub files_written: u64,
    pub bytes_written: u64,
    pub outputs: Vec<OutputName>,
    pub entries: Vec<IsoEntry>,
}

impl ExtractionReport {
    pub fn sidecar(&self, image_sha256: &str) -> ExtractionSidecar {
        let outputs = self
            .entries
            .iter()
            .filter(|e| !e.is_directory)
            .map(|e| {
                let name = e.name().to_owned();
                let extension = match name.rsplit_once('.') {
                    Some((stem, ext)) if !stem.is_empty() => ext.to_owned(),
                    _ => String::new(),
                };
                OutputName { name, extension }
            })
            .collect();
        ExtractionSidecar {
            image_sha256: image_sha256.to_owned(),
            tree: self.tree,
            name_case: "verbatim".into(),
            files_written: self.files_written,
            bytes_written: self.bytes_written,
            outputs,
            entries: self.entries.clone(),
        }
    }
}

/// Writes every file of the image under `destination`, keeping the directory
/// structure. Nothing is written if any target path already exists as a file.
pub fn iso_extract(
    image: &[u8],
    destination: &Path,
    options: IsoOptions,
) -> Result<ExtractionReport, ExtractError> {
    let volume = select_volume(image, options)?;
    let entries = iso_list_with(image, options)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExtractError::Io { path, source }
    };

    if !destination.is_dir() {
        return Err(ExtractError::Io {
            path: destination.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "destination is not a directory"),
        });
    }
    for entry in &entries {
        let target = destination.join(&entry.path);
        match fs::symlink_metadata(&target) {
            Ok(meta) if entry.is_directory && meta.is_dir() => {}
            Ok(_) => return Err(ExtractError::Collision(target)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&target)(e)),
        }
    }

    let mut files_written = 0;
    let mut bytes_written = 0;
    for entry in &entries {
        let target = destination.join(&entry.path);
        if entry.is_directory {
            fs::create_dir_all(&target).map_err(io_err(&target))?;
            continue;
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let start = entry.extent_lba as usize * volume.block_size;
        let data = &image[start..start + entry.data_length as usize];
        let mut file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&target)
            .map_err(|e| match e.kind() {
                io::ErrorKind::AlreadyExists => ExtractError::Collision(target.clone()),
                _ => io_err(&target)(e),
            })?;
        file.write_all(data).map_err(io_err(&target))?;
        files_written += 1;
        bytes_written += data.len() as u64;
    }

    Ok(ExtractionReport {
        files_written,
        bytes_written,
        tree: volume.tree,
        entries,
    })
}
