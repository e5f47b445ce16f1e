//! Execution of processing plans and the post-stabilization cleanup of a
//! project tree: batch merging and de-duplication.
//!
//! [`run_plan`] keeps the disk image under `masters/`, writes extracted
//! content under `derived/` and moves partial output of a failed run to
//! `failed/`. Masters are hashed before and after every run; a run that
//! would leave a master changed is an error.

pub mod layout;
mod merge;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{identify, CarrierClass, PlanStep, ProcessingPlan};
use crate::fixity::{sha256_file, sha256_hex, FixityError, COLLECTION_MANIFEST_NAME};
use crate::iso::{iso_extract, ExtractError, IsoOptions};
use crate::sector::{
    parse_cue_bytes, riff_declared_len, split_tracks, wrap_wav, CueError, CueSheet, PayloadKind, SectorMode,
    SplitError, TrackPayload,
};

pub use layout::{directory_name, layout_path, validate_identifier, Relation};
pub use merge::{dedupe, merge_batches, plan_merge, DedupeRecord, MergeReport};

use layout::{
    track_files_dir, track_sidecar_name, track_wav_name, FAILED_DIR, FILES_DIR, IMAGE_SIDECAR_NAME,
    MANUAL_MARKER_NAME, MANUAL_PREFIX, TRACKS_SIDECAR_NAME,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cue sheet {path}: {source}")]
    Cue {
        path: PathBuf,
        #[source]
        source: CueError,
    },
    #[error("cue sheet references unusable file name {0:?}")]
    UnsafeSourceName(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Fixity(#[from] FixityError),
    #[error("plan step {0:?} needs a cue sheet")]
    MissingCue(PlanStep),
    #[error("derived output {0} already exists")]
    AlreadyStabilized(PathBuf),
    #[error("master {0} already exists with different content")]
    MasterConflict(PathBuf),
    #[error("master {0} changed during processing")]
    MasterChanged(PathBuf),
    #[error("{path} differs between {first} and {second}")]
    MergeConflict { path: String, first: PathBuf, second: PathBuf },
    #[error("batch {root} does not verify against its manifest ({problems} problem paths)")]
    UnverifiedBatch { root: PathBuf, problems: usize },
    #[error("manifest of {root} is out of date: {path}")]
    StaleManifest { root: PathBuf, path: String },
    #[error("carrier {carrier_id} failed ({source}); partial output quarantined in {}", quarantine.display())]
    Quarantined {
        carrier_id: String,
        quarantine: PathBuf,
        #[source]
        source: Box<PipelineError>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError {
    let path = path.to_path_buf();
    move |source| PipelineError::Io { path, source }
}

/// One carrier as submitted: the image and, for CUE/BIN sets, the cue sheet
/// and every file it references.
#[derive(Debug, Clone)]
pub struct CarrierInput {
    pub carrier_id: String,
    pub image_name: String,
    pub image: Vec<u8>,
    pub cue_name: Option<String>,
    pub cue_text: Option<Vec<u8>>,
    pub cue: Option<CueSheet>,
    /// Cue source files by the name the cue uses.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl CarrierInput {
    /// Reads an image and optional cue sheet from disk. Cue source files are
    /// resolved next to the cue; a single-file cue falls back to
    /// `image_path` when its named file is absent.
    pub fn load(carrier_id: &str, image_path: &Path, cue_path: Option<&Path>) -> Result<Self, PipelineError> {
        validate_identifier(&directory_name(carrier_id))?;
        let image = fs::read(image_path).map_err(io_err(image_path))?;
        let mut input = CarrierInput::from_bytes(carrier_id, &file_name(image_path), image);
        if let Some(cue_path) = cue_path {
            let text = fs::read(cue_path).map_err(io_err(cue_path))?;
            let cue = parse_cue_bytes(&text).map_err(|source| PipelineError::Cue {
                path: cue_path.to_path_buf(),
                source,
            })?;
            let dir = cue_path.parent().unwrap_or(Path::new("."));
            let mut files = BTreeMap::new();
            for name in &cue.source_files {
                check_relative(name)?;
                let candidate = dir.join(name);
                let bytes = if candidate.is_file() {
                    fs::read(&candidate).map_err(io_err(&candidate))?
                } else if cue.source_files.len() == 1 {
                    input.image.clone()
                } else {
                    return Err(PipelineError::Split(SplitError::MissingFile(name.clone())));
                };
                files.insert(name.clone(), bytes);
            }
            input.cue_name = Some(file_name(cue_path));
            input.cue_text = Some(text);
            input.cue = Some(cue);
            input.files = files;
        }
        Ok(input)
    }

    pub fn from_bytes(carrier_id: &str, image_name: &str, image: Vec<u8>) -> Self {
        CarrierInput {
            carrier_id: carrier_id.to_owned(),
            image_name: image_name.to_owned(),
            image,
            cue_name: None,
            cue_text: None,
            cue: None,
            files: BTreeMap::new(),
        }
    }

    /// Attaches an in-memory cue sheet whose files all equal the image.
    pub fn with_cue(mut self, cue_name: &str, cue_text: &str) -> Result<Self, PipelineError> {
        let cue = parse_cue_bytes(cue_text.as_bytes()).map_err(|source| PipelineError::Cue {
            path: PathBuf::from(cue_name),
            source,
        })?;
        for name in &cue.source_files {
            check_relative(name)?;
        }
        self.files = cue.source_files.iter().map(|f| (f.clone(), self.image.clone())).collect();
        self.cue_name = Some(cue_name.to_owned());
        self.cue_text = Some(cue_text.as_bytes().to_vec());
        self.cue = Some(cue);
        Ok(self)
    }

    pub fn classify(&self) -> CarrierClass {
        identify(&self.image, self.cue.as_ref(), &self.files).class
    }

    /// Files kept as the master: the image, or the cue plus its sources.
    fn master_files(&self) -> Vec<(String, &[u8])> {
        match (&self.cue_name, &self.cue_text) {
            (Some(cue_name), Some(text)) => {
                let mut out = vec![(cue_name.clone(), text.as_slice())];
                out.extend(self.files.iter().map(|(n, b)| (n.clone(), b.as_slice())));
                out
            }
            _ => vec![(self.image_name.clone(), self.image.as_slice())],
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn check_relative(name: &str) -> Result<(), PipelineError> {
    let path = Path::new(name);
    let ok = !name.is_empty()
        && !name.contains('\\')
        && path.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::UnsafeSourceName(name.to_owned()))
    }
}

/// One line of `tracks.json`, written whenever a cue sheet was split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub number: u8,
    pub mode: SectorMode,
    pub source_file: String,
    pub start_sector: u64,
    pub length_sectors: u64,
    /// Stored pregap sectors kept at the head of the output.
    pub pregap_sectors: u64,
    pub payload: PayloadKind,
    pub payload_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrackRecord {
    fn of(payload: &TrackPayload) -> Self {
        let t = &payload.track;
        TrackRecord {
            number: t.number,
            mode: t.mode,
            source_file: t.source_file.clone(),
            start_sector: t.start_sector,
            length_sectors: t.length_sectors.unwrap_or(0),
            pregap_sectors: t.pregap_sectors,
            payload: payload.suggested_kind,
            payload_bytes: payload.bytes.len() as u64,
            note: t
                .mode
                .is_mode2()
                .then(|| "Mode 2 user data taken as 2336 bytes per sector; sub-header not interpreted".into()),
        }
    }
}

/// Inventory of one successful run. Paths are relative to the output root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizedOutput {
    pub carrier_id: String,
    pub class: CarrierClass,
    pub master_image_paths: Vec<PathBuf>,
    pub derived_paths: Vec<PathBuf>,
    pub plan: ProcessingPlan,
    pub manifest_ref: PathBuf,
    pub master_bytes: u64,
    pub notes: String,
}

impl StabilizedOutput {
    /// Master file names, as recorded in a stabilization event.
    pub fn output_files(&self) -> Vec<String> {
        self.master_image_paths.iter().map(|p| file_name(p)).collect()
    }
}

/// Executes `plan` for one carrier under `output_root/<project_id>/`.
///
/// On failure after output was written, the carrier's derived directory is
/// moved to `failed/` and the error is wrapped in
/// [`PipelineError::Quarantined`]. Masters are left in place.
pub fn run_plan(
    input: &CarrierInput,
    plan: &ProcessingPlan,
    output_root: &Path,
    project_id: &str,
) -> Result<StabilizedOutput, PipelineError> {
    let dir_name = directory_name(&input.carrier_id);
    let masters = output_root.join(layout_path(project_id, &dir_name, Relation::Master)?);
    let derived_rel = layout_path(project_id, &dir_name, Relation::DerivedFromImages)?;
    let derived = output_root.join(&derived_rel);
    if derived.exists() {
        return Err(PipelineError::AlreadyStabilized(derived));
    }

    let master_digests = keep_masters(input, &masters)?;
    fs::create_dir_all(&derived).map_err(io_err(&derived))?;
    let result = execute_steps(input, plan, &derived).and_then(|notes| {
        for (path, digest) in &master_digests {
            if sha256_file(path).map_err(io_err(path))? != *digest {
                return Err(PipelineError::MasterChanged(path.clone()));
            }
        }
        Ok(notes)
    });
    let notes = match result {
        Ok(notes) => notes,
        Err(source) => {
            let quarantine = quarantine(output_root, project_id, &dir_name, &derived)?;
            return Err(PipelineError::Quarantined {
                carrier_id: input.carrier_id.clone(),
                quarantine,
                source: Box::new(source),
            });
        }
    };

    let mut derived_paths: Vec<PathBuf> = walkdir::WalkDir::new(&derived)
        .min_depth(1)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| derived_rel.join(e.path().strip_prefix(&derived).unwrap()))
        .collect();
    derived_paths.sort();
    let mut master_image_paths: Vec<PathBuf> = master_digests
        .keys()
        .map(|p| p.strip_prefix(output_root).unwrap_or(p).to_path_buf())
        .collect();
    master_image_paths.sort();
    Ok(StabilizedOutput {
        carrier_id: input.carrier_id.clone(),
        class: input.classify(),
        master_image_paths,
        derived_paths,
        plan: plan.clone(),
        manifest_ref: PathBuf::from(project_id).join(COLLECTION_MANIFEST_NAME),
        master_bytes: input.master_files().iter().map(|(_, b)| b.len() as u64).sum(),
        notes,
    })
}

/// Copies the master files, or accepts byte-identical copies already in
/// place from an earlier attempt. Returns each master path with its digest.
fn keep_masters(input: &CarrierInput, masters: &Path) -> Result<BTreeMap<PathBuf, String>, PipelineError> {
    let mut digests = BTreeMap::new();
    for (name, bytes) in input.master_files() {
        let target = masters.join(&name);
        let digest = sha256_hex(bytes);
        if target.exists() {
            if sha256_file(&target).map_err(io_err(&target))? != digest {
                return Err(PipelineError::MasterConflict(target));
            }
        } else {
            let parent = target.parent().unwrap_or(masters);
            fs::create_dir_all(parent).map_err(io_err(parent))?;
            let mut file = fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&target)
                .map_err(io_err(&target))?;
            file.write_all(bytes).map_err(io_err(&target))?;
            file.sync_all().map_err(io_err(&target))?;
        }
        digests.insert(target, digest);
    }
    Ok(digests)
}

fn execute_steps(input: &CarrierInput, plan: &ProcessingPlan, derived: &Path) -> Result<String, PipelineError> {
    let options = IsoOptions { joliet: true };
    let mut notes = Vec::new();
    let mut tracks: Option<Vec<TrackPayload>> = None;
    let split = |step: PlanStep| -> Result<Vec<TrackPayload>, PipelineError> {
        let cue = input.cue.as_ref().ok_or(PipelineError::MissingCue(step))?;
        Ok(split_tracks(cue, &input.files)?)
    };

    for &step in &plan.steps {
        match step {
            PlanStep::KeepImageAsMaster => {}
            PlanStep::SplitTracks => {
                let payloads = split(step)?;
                notes.push(format!("split {} tracks", payloads.len()));
                tracks = Some(payloads);
            }
            PlanStep::ExtractIsoFiles => match (&input.cue, &tracks) {
                (None, _) => {
                    let target = derived.join(FILES_DIR);
                    create_dir(&target)?;
                    let report = iso_extract(&input.image, &target, options)?;
                    write_json(&derived.join(IMAGE_SIDECAR_NAME), &report.sidecar(&sha256_hex(&input.image)))?;
                    notes.push(format!("extracted {} files", report.files_written));
                }
                (Some(_), _) => {
                    if tracks.is_none() {
                        tracks = Some(split(step)?);
                    }
                    for payload in tracks.iter().flatten().filter(|p| p.suggested_kind == PayloadKind::IsoData) {
                        let number = payload.track.number;
                        let target = derived.join(track_files_dir(number));
                        create_dir(&target)?;
                        let report = iso_extract(&payload.bytes, &target, options)?;
                        let sidecar = report.sidecar(&sha256_hex(&payload.bytes));
                        write_json(&derived.join(track_sidecar_name(number)), &sidecar)?;
                        notes.push(format!("track {number:02}: extracted {} files", report.files_written));
                    }
                }
            },
            PlanStep::WrapAudioWav | PlanStep::CopyWavVerbatim => {
                let payloads = tracks.as_ref().ok_or(PipelineError::MissingCue(step))?;
                for payload in payloads.iter().filter(|p| p.track.mode.is_audio()) {
                    let number = payload.track.number;
                    let verbatim = step == PlanStep::CopyWavVerbatim
                        && payload.suggested_kind == PayloadKind::WavWrappedAudio;
                    let target = derived.join(track_wav_name(number));
                    if verbatim {
                        // Sector padding after the declared RIFF length is not part of the file.
                        let end = riff_declared_len(&payload.bytes)
                            .unwrap_or(payload.bytes.len())
                            .min(payload.bytes.len());
                        write_new(&target, &payload.bytes[..end])?;
                        notes.push(format!("track {number:02}: copied WAV verbatim"));
                    } else {
                        write_new(&target, &wrap_wav(&payload.bytes))?;
                    }
                }
            }
            PlanStep::FlagForManual => {
                let marker = format!("{MANUAL_PREFIX} {}\n", plan.rationale);
                write_new(&derived.join(MANUAL_MARKER_NAME), marker.as_bytes())?;
                notes.push("flagged for manual processing".into());
            }
        }
    }
    if let Some(payloads) = &tracks {
        let records: Vec<TrackRecord> = payloads.iter().map(TrackRecord::of).collect();
        write_json(&derived.join(TRACKS_SIDECAR_NAME), &records)?;
    }
    Ok(notes.join("; "))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut file = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("sidecar serializes");
    text.push('\n');
    write_new(path, text.as_bytes())
}

/// Moves `derived` to `failed/<carrier>`, or `failed/<carrier>.N` when an
/// earlier attempt is already quarantined.
fn quarantine(output_root: &Path, project_id: &str, carrier_id: &str, derived: &Path) -> Result<PathBuf, PipelineError> {
    let failed_root = output_root.join(project_id).join(FAILED_DIR);
    fs::create_dir_all(&failed_root).map_err(io_err(&failed_root))?;
    let mut target = failed_root.join(carrier_id);
    let mut n = 2;
    while target.exists() {
        target = failed_root.join(format!("{carrier_id}.{n}"));
        n += 1;
    }
    fs::rename(derived, &target).map_err(io_err(derived))?;
    Ok(target)
}
