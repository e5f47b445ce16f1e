//! Deterministic generator of synthetic carriers with ground truth.
//!
//! A [`ForgeSpec`] names the target [`CarrierClass`] and the content to put on
//! it. [`forge`] returns the image bytes, an optional cue sheet and a
//! [`GroundTruth`] describing everything the pipeline should recover. All
//! pseudo-random content comes from ChaCha8 seeded with `spec.seed`, drawn in
//! spec order (tree entries first, then tracks), so fixtures are identical on
//! every platform.

mod framing;
mod iso_writer;

pub mod corpus;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::CarrierClass;
use crate::detect::{HFS_HEADER_OFFSET, MDS_SIGNATURE};
use crate::pipeline::layout::{track_files_dir, track_wav_name, FILES_DIR};
use crate::sector::{format_msf, wrap_wav, SectorMode, WAV_HEADER_LEN};

pub const DEFAULT_MAX_IMAGE_BYTES: u64 = 64 * 1024 * 1024;
const OPAQUE_IMAGE_BYTES: usize = 64 * 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForgeError {
    #[error("{path:?} is not representable: {reason}")]
    NotRepresentable { path: String, reason: String },
    #[error("forged image would be {size} bytes, above the {limit}-byte limit")]
    TooLarge { size: u64, limit: u64 },
    #[error("invalid forge spec: {0}")]
    InvalidSpec(String),
    #[error("mutation offset {offset} out of range for a {len}-byte image")]
    OutOfRange { offset: u64, len: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileContent {
    /// `n` pseudo-random bytes.
    Random(usize),
    Text(String),
    Hex(String),
    Directory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub path: String,
    pub content: FileContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub mode: SectorMode,
    /// Body length in sectors. Ignored for data tracks, which hold an ISO
    /// image of the spec's tree.
    #[serde(default)]
    pub sectors: u32,
    /// Stored `INDEX 00` pregap (audio tracks only).
    #[serde(default)]
    pub pregap_sectors: u32,
    /// Override whether an audio track is WAV-wrapped; defaults to `true`
    /// only for `MalformedAudioWav`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav_wrapped: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeSpec {
    pub kind: CarrierClass,
    /// File stem for the image (and cue) names.
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub volume_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<TreeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<Vec<TrackSpec>>,
    /// Write a Joliet tree so long or mixed-case names survive.
    #[serde(default)]
    pub joliet: bool,
    /// For `HfsPlus`: write the case-sensitive "HX" signature.
    #[serde(default)]
    pub hfsx: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_image_bytes: Option<u64>,
}

fn default_name() -> String {
    "carrier".into()
}

impl ForgeSpec {
    pub fn new(kind: CarrierClass, seed: u64) -> Self {
        ForgeSpec {
            kind,
            name: default_name(),
            volume_id: String::new(),
            seed,
            tree: None,
            tracks: None,
            joliet: false,
            hfsx: false,
            max_image_bytes: None,
        }
    }

    pub fn with_tree(mut self, tree: Vec<TreeNode>) -> Self {
        self.tree = Some(tree);
        self
    }

    pub fn with_tracks(mut self, tracks: Vec<TrackSpec>) -> Self {
        self.tracks = Some(tracks);
        self
    }

    pub fn with_volume_id(mut self, id: &str) -> Self {
        self.volume_id = id.to_owned();
        self
    }
}

impl TreeNode {
    pub fn random(path: &str, len: usize) -> Self {
        TreeNode { path: path.into(), content: FileContent::Random(len) }
    }

    pub fn text(path: &str, text: &str) -> Self {
        TreeNode { path: path.into(), content: FileContent::Text(text.into()) }
    }

    pub fn dir(path: &str) -> Self {
        TreeNode { path: path.into(), content: FileContent::Directory }
    }
}

impl TrackSpec {
    pub fn audio(sectors: u32) -> Self {
        TrackSpec { mode: SectorMode::Audio2352, sectors, pregap_sectors: 0, wav_wrapped: None }
    }

    pub fn data(mode: SectorMode) -> Self {
        TrackSpec { mode, sectors: 0, pregap_sectors: 0, wav_wrapped: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// Flip one bit of the byte at `offset`.
    BitFlip { offset: u64, bit: u8 },
    /// Cut the image to `length` bytes.
    Truncate { length: u64 },
    /// Zero one sector (2048 bytes for plain images, 2352 for raw bins).
    ZeroSector { index: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackTruth {
    pub number: u8,
    pub mode: SectorMode,
    pub start_sector: u64,
    pub pregap_sectors: u64,
    /// User data after deframing, stored pregap included.
    pub payload: Vec<u8>,
    pub wav_wrapped: bool,
}

/// Everything an oracle needs to judge the pipeline's handling of a fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub kind: CarrierClass,
    pub volume_id: String,
    pub image_name: String,
    pub cue_name: Option<String>,
    /// Files on the data tree (DVD additions included), by path.
    pub files: BTreeMap<String, Vec<u8>>,
    pub directories: BTreeSet<String>,
    pub tracks: Vec<TrackTruth>,
    /// Expected content files under the carrier's derived directory.
    pub expected_derived: BTreeMap<String, Vec<u8>>,
    /// Directories expected under the derived directory (may be empty).
    pub expected_derived_dirs: BTreeSet<String>,
    pub expects_manual: bool,
    pub mutations: Vec<Mutation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub image: Vec<u8>,
    pub cue: Option<String>,
    pub truth: GroundTruth,
}

impl Artifact {
    /// Sector size used by [`Mutation::ZeroSector`].
    pub fn sector_size(&self) -> usize {
        if self.cue.is_some() {
            crate::sector::RAW_SECTOR_SIZE
        } else {
            crate::sector::DATA_SECTOR_SIZE
        }
    }
}

pub fn forge(spec: &ForgeSpec) -> Result<Artifact, ForgeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let limit = spec.max_image_bytes.unwrap_or(DEFAULT_MAX_IMAGE_BYTES);
    let mut truth = GroundTruth {
        kind: spec.kind,
        volume_id: spec.volume_id.clone(),
        image_name: String::new(),
        cue_name: None,
        files: BTreeMap::new(),
        directories: BTreeSet::new(),
        tracks: Vec::new(),
        expected_derived: BTreeMap::new(),
        expected_derived_dirs: BTreeSet::new(),
        expects_manual: false,
        mutations: Vec::new(),
    };

    let nodes = materialize_tree(spec, &mut rng, &mut truth)?;
    let (image, cue) = match spec.kind {
        CarrierClass::IsoDataDisk | CarrierClass::UdfDataDisk | CarrierClass::DvdVideo => {
            let image = iso_writer::build_iso(&iso_writer::IsoSource {
                volume_id: &spec.volume_id,
                nodes: &nodes,
                joliet: spec.joliet,
                udf_bridge: spec.kind != CarrierClass::IsoDataDisk,
            })?;
            check_size(image.len(), limit)?;
            expect_tree(&mut truth, FILES_DIR);
            truth.image_name = format!("{}.iso", spec.name);
            (image, None)
        }
        CarrierClass::RedBookAudio | CarrierClass::MixedMode | CarrierClass::MalformedAudioWav => {
            let (bin, cue) = forge_tracks(spec, &nodes, &mut rng, &mut truth, limit)?;
            truth.image_name = format!("{}.bin", spec.name);
            truth.cue_name = Some(format!("{}.cue", spec.name));
            (bin, Some(cue))
        }
        CarrierClass::HfsPlus => {
            let mut image = opaque_bytes(&mut rng);
            image[HFS_HEADER_OFFSET..HFS_HEADER_OFFSET + 2]
                .copy_from_slice(if spec.hfsx { b"HX" } else { b"H+" });
            image[HFS_HEADER_OFFSET + 2..HFS_HEADER_OFFSET + 4]
                .copy_from_slice(&(if spec.hfsx { 5u16 } else { 4u16 }).to_be_bytes());
            image[HFS_HEADER_OFFSET + 40..HFS_HEADER_OFFSET + 44].copy_from_slice(&4096u32.to_be_bytes());
            truth.image_name = format!("{}.img", spec.name);
            truth.expects_manual = true;
            (image, None)
        }
        CarrierClass::MdsOpaque => {
            let mut image = opaque_bytes(&mut rng);
            image[..16].copy_from_slice(MDS_SIGNATURE);
            image[16..18].copy_from_slice(&[1, 5]);
            truth.image_name = format!("{}.mds", spec.name);
            truth.expects_manual = true;
            (image, None)
        }
        CarrierClass::Unknown => {
            let image = opaque_bytes(&mut rng);
            truth.image_name = format!("{}.img", spec.name);
            truth.expects_manual = true;
            (image, None)
        }
    };
    Ok(Artifact { image, cue, truth })
}

/// Random bytes with every signature position neutralised.
fn opaque_bytes(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut image = vec![0u8; OPAQUE_IMAGE_BYTES];
    rng.fill_bytes(&mut image);
    image[..16].fill(0);
    image[HFS_HEADER_OFFSET..HFS_HEADER_OFFSET + 2].fill(0);
    image[32768..32768 + 8 * 2048].fill(0);
    image
}

fn check_size(size: usize, limit: u64) -> Result<(), ForgeError> {
    if size as u64 > limit {
        return Err(ForgeError::TooLarge { size: size as u64, limit });
    }
    Ok(())
}

fn materialize_tree(
    spec: &ForgeSpec,
    rng: &mut ChaCha8Rng,
    truth: &mut GroundTruth,
) -> Result<BTreeMap<String, Option<Vec<u8>>>, ForgeError> {
    let mut nodes = BTreeMap::new();
    let tree = spec.tree.clone().unwrap_or_default();
    let needs_tree = matches!(
        spec.kind,
        CarrierClass::IsoDataDisk | CarrierClass::UdfDataDisk | CarrierClass::DvdVideo | CarrierClass::MixedMode
    );
    if spec.tree.is_none() && needs_tree && spec.kind != CarrierClass::DvdVideo {
        return Err(ForgeError::InvalidSpec(format!("{} requires a tree", spec.kind)));
    }
    for node in tree {
        if node.path.starts_with('/') || node.path.split('/').any(|p| p.is_empty() || p == "." || p == "..") {
            return Err(ForgeError::NotRepresentable { path: node.path, reason: "not a relative path".into() });
        }
        let content = match node.content {
            FileContent::Random(len) => {
                let mut bytes = vec![0u8; len];
                rng.fill_bytes(&mut bytes);
                Some(bytes)
            }
            FileContent::Text(text) => Some(text.into_bytes()),
            FileContent::Hex(hex_text) => Some(
                hex::decode(&hex_text).map_err(|e| ForgeError::InvalidSpec(format!("{}: {e}", node.path)))?,
            ),
            FileContent::Directory => None,
        };
        if nodes.insert(node.path.clone(), content).is_some() {
            return Err(ForgeError::InvalidSpec(format!("duplicate tree path {}", node.path)));
        }
    }
    if spec.kind == CarrierClass::DvdVideo
        && !nodes.keys().any(|p| p.split('/').next().is_some_and(|top| top.eq_ignore_ascii_case("VIDEO_TS")))
    {
        let mut ifo = vec![0u8; 2048];
        rng.fill_bytes(&mut ifo);
        ifo[..12].copy_from_slice(b"DVDVIDEO-VMG");
        let vob_len = 2048 * rng.gen_range(2..6) + rng.gen_range(0..2048);
        let mut vob = vec![0u8; vob_len];
        rng.fill_bytes(&mut vob);
        nodes.insert("VIDEO_TS/VIDEO_TS.IFO".into(), Some(ifo));
        nodes.insert("VIDEO_TS/VTS_01_1.VOB".into(), Some(vob));
        nodes.insert("AUDIO_TS".into(), None);
    }

    for (path, content) in &nodes {
        // Every ancestor is a directory.
        let mut prefix = String::new();
        let parts: Vec<&str> = path.split('/').collect();
        for part in &parts[..parts.len() - 1] {
            if !prefix.is_empty() {
                prefix.push('/');
            }
            prefix.push_str(part);
            truth.directories.insert(prefix.clone());
        }
        match content {
            Some(bytes) => {
                truth.files.insert(path.clone(), bytes.clone());
            }
            None => {
                truth.directories.insert(path.clone());
            }
        }
    }
    if let Some(clash) = truth.files.keys().find(|f| truth.directories.contains(*f)) {
        return Err(ForgeError::InvalidSpec(format!("{clash} is both a file and a directory")));
    }
    Ok(nodes)
}

/// Records the tree as expected derived content under `prefix`.
fn expect_tree(truth: &mut GroundTruth, prefix: &str) {
    truth.expected_derived_dirs.insert(prefix.to_owned());
    for dir in &truth.directories {
        truth.expected_derived_dirs.insert(format!("{prefix}/{dir}"));
    }
    for (path, bytes) in &truth.files {
        truth.expected_derived.insert(format!("{prefix}/{path}"), bytes.clone());
    }
}

fn forge_tracks(
    spec: &ForgeSpec,
    nodes: &BTreeMap<String, Option<Vec<u8>>>,
    rng: &mut ChaCha8Rng,
    truth: &mut GroundTruth,
    limit: u64,
) -> Result<(Vec<u8>, String), ForgeError> {
    let tracks = spec
        .tracks
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ForgeError::InvalidSpec(format!("{} requires tracks", spec.kind)))?;
    if tracks.len() > 99 {
        return Err(ForgeError::InvalidSpec("more than 99 tracks".into()));
    }
    if tracks.iter().any(|t| t.mode == SectorMode::Mode2Form1_2352) {
        return Err(ForgeError::InvalidSpec("Mode 2 Form 1 cannot be declared on a cue sheet".into()));
    }
    let raw_size = tracks[0].mode.raw_size();
    if tracks.iter().any(|t| t.mode.raw_size() != raw_size) {
        return Err(ForgeError::InvalidSpec("tracks mix 2048- and 2352-byte raw sectors".into()));
    }
    let audio = tracks.iter().filter(|t| t.mode.is_audio()).count();
    let consistent = match spec.kind {
        CarrierClass::RedBookAudio | CarrierClass::MalformedAudioWav => audio == tracks.len(),
        _ => audio > 0 && audio < tracks.len(),
    };
    let wrapped_count = tracks
        .iter()
        .filter(|t| t.mode.is_audio() && t.wav_wrapped.unwrap_or(spec.kind == CarrierClass::MalformedAudioWav))
        .count();
    let wrapping_fits = match spec.kind {
        CarrierClass::MalformedAudioWav => wrapped_count > 0,
        _ => wrapped_count == 0,
    };
    if !consistent || !wrapping_fits {
        return Err(ForgeError::InvalidSpec(format!("track layout does not fit {}", spec.kind)));
    }

    let iso = if tracks.iter().any(|t| !t.mode.is_audio()) {
        Some(iso_writer::build_iso(&iso_writer::IsoSource {
            volume_id: &spec.volume_id,
            nodes,
            joliet: spec.joliet,
            udf_bridge: false,
        })?)
    } else {
        None
    };

    let bin_name = format!("{}.bin", spec.name);
    let mut cue = format!("FILE \"{bin_name}\" BINARY\n");
    let mut bin = Vec::new();
    let mut position = 0u64;
    for (i, track) in tracks.iter().enumerate() {
        let number = i as u8 + 1;
        let unit = track.mode.user_data_size();
        let wrapped = track.mode.is_audio()
            && track.wav_wrapped.unwrap_or(spec.kind == CarrierClass::MalformedAudioWav);
        if track.pregap_sectors > 0 && (!track.mode.is_audio() || wrapped) {
            return Err(ForgeError::InvalidSpec(format!(
                "track {number:02}: stored pregaps are only forged on raw audio tracks"
            )));
        }
        if track.mode.is_audio() && track.sectors == 0 {
            return Err(ForgeError::InvalidSpec(format!("track {number:02} has no sectors")));
        }

        let (payload, expected) = if let Some(iso) = iso.as_ref().filter(|_| !track.mode.is_audio()) {
            let mut payload = iso.clone();
            payload.resize(iso.len().div_ceil(unit) * unit, 0);
            (payload, None)
        } else if wrapped {
            let body = track.sectors as usize * unit;
            let spare = 4 * rng.gen_range(0..=32usize);
            let pcm_len = body.saturating_sub(WAV_HEADER_LEN + spare) & !3;
            let mut pcm = vec![0u8; pcm_len];
            rng.fill_bytes(&mut pcm);
            let wav = wrap_wav(&pcm);
            let mut payload = wav.clone();
            payload.resize(body, 0);
            (payload, Some(wav))
        } else {
            let mut payload = vec![0u8; (track.pregap_sectors + track.sectors) as usize * unit];
            rng.fill_bytes(&mut payload);
            let wav = wrap_wav(&payload);
            (payload, Some(wav))
        };

        let sectors = (payload.len() / unit) as u64;
        let start = position + track.pregap_sectors as u64;
        cue.push_str(&format!("  TRACK {number:02} {}\n", track.mode.cue_token()));
        if track.pregap_sectors > 0 {
            cue.push_str(&format!("    INDEX 00 {}\n", format_msf(position)));
        }
        cue.push_str(&format!("    INDEX 01 {}\n", format_msf(start)));
        bin.extend(framing::frame(track.mode, &payload, position));
        check_size(bin.len(), limit)?;
        position += sectors;

        match expected {
            Some(wav) => {
                truth.expected_derived.insert(track_wav_name(number), wav);
            }
            None => {
                let prefix = track_files_dir(number);
                expect_tree(truth, &prefix);
            }
        }
        truth.tracks.push(TrackTruth {
            number,
            mode: track.mode,
            start_sector: start,
            pregap_sectors: track.pregap_sectors as u64,
            payload,
            wav_wrapped: wrapped,
        });
    }
    Ok((bin, cue))
}

/// Returns a mutated copy of `artifact`; the original is left untouched.
pub fn corrupt(artifact: &Artifact, mutation: Mutation) -> Result<Artifact, ForgeError> {
    let mut out = artifact.clone();
    let len = out.image.len() as u64;
    match mutation {
        Mutation::BitFlip { offset, bit } => {
            if offset >= len || bit > 7 {
                return Err(ForgeError::OutOfRange { offset, len });
            }
            out.image[offset as usize] ^= 1 << bit;
        }
        Mutation::Truncate { length } => {
            if length >= len {
                return Err(ForgeError::OutOfRange { offset: length, len });
            }
            out.image.truncate(length as usize);
        }
        Mutation::ZeroSector { index } => {
            let size = out.sector_size() as u64;
            let start = index * size;
            if start + size > len {
                return Err(ForgeError::OutOfRange { offset: start, len });
            }
            out.image[start as usize..(start + size) as usize].fill(0);
        }
    }
    out.truth.mutations.push(mutation);
    Ok(out)
}
