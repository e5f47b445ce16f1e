//! Carrier classification and the per-class processing plan.
//!
//! Decision order, most specific signature first:
//! 1. MDS signature on the image file: `MdsOpaque`.
//! 2. A cue sheet with at least one audio track: `MalformedAudioWav` when
//!    every track is audio and any track starts with a RIFF/WAVE header,
//!    `RedBookAudio` when every track is audio, `MixedMode` otherwise.
//! 3. A single data payload: HFS+ first, then ISO 9660 (with or without a UDF
//!    bridge), with `VIDEO_TS` in the root promoting to `DvdVideo`.
//! 4. `Unknown`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::{self, detect_dvd_video, detect_hfsplus, detect_iso9660, detect_mds, detect_udf, VolumeInfo};
use crate::iso::iso_root_listing;
use crate::sector::{detect_riff, split_tracks, CueSheet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CarrierClass {
    IsoDataDisk,
    UdfDataDisk,
    DvdVideo,
    HfsPlus,
    RedBookAudio,
    MixedMode,
    MalformedAudioWav,
    MdsOpaque,
    Unknown,
}

impl CarrierClass {
    pub const ALL: [CarrierClass; 9] = [
        CarrierClass::IsoDataDisk,
        CarrierClass::UdfDataDisk,
        CarrierClass::DvdVideo,
        CarrierClass::HfsPlus,
        CarrierClass::RedBookAudio,
        CarrierClass::MixedMode,
        CarrierClass::MalformedAudioWav,
        CarrierClass::MdsOpaque,
        CarrierClass::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CarrierClass::IsoDataDisk => "IsoDataDisk",
            CarrierClass::UdfDataDisk => "UdfDataDisk",
            CarrierClass::DvdVideo => "DvdVideo",
            CarrierClass::HfsPlus => "HfsPlus",
            CarrierClass::RedBookAudio => "RedBookAudio",
            CarrierClass::MixedMode => "MixedMode",
            CarrierClass::MalformedAudioWav => "MalformedAudioWav",
            CarrierClass::MdsOpaque => "MdsOpaque",
            CarrierClass::Unknown => "Unknown",
        }
    }

    /// Classes whose image is a cue/bin pair rather than a single data image.
    pub fn uses_cue(self) -> bool {
        matches!(
            self,
            CarrierClass::RedBookAudio | CarrierClass::MixedMode | CarrierClass::MalformedAudioWav
        )
    }
}

impl fmt::Display for CarrierClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CarrierClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CarrierClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown carrier class {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanStep {
    KeepImageAsMaster,
    SplitTracks,
    WrapAudioWav,
    CopyWavVerbatim,
    ExtractIsoFiles,
    FlagForManual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessingPlan {
    pub steps: Vec<PlanStep>,
    pub rationale: String,
}

impl ProcessingPlan {
    pub fn contains(&self, step: PlanStep) -> bool {
        self.steps.contains(&step)
    }

    pub fn is_manual(&self) -> bool {
        self.contains(PlanStep::FlagForManual)
    }
}

/// Classifies a single image file, or a cue sheet whose tracks all live in
/// `image`.
pub fn classify(image: &[u8], cue: Option<&CueSheet>) -> CarrierClass {
    let files = match cue {
        Some(cue) => cue
            .source_files
            .iter()
            .map(|f| (f.clone(), image.to_vec()))
            .collect(),
        None => BTreeMap::new(),
    };
    classify_carrier(image, cue, &files)
}

/// Classifies a carrier given its primary image file and, for cue sheets,
/// the bytes of every referenced source file.
pub fn classify_carrier(
    image: &[u8],
    cue: Option<&CueSheet>,
    files: &BTreeMap<String, Vec<u8>>,
) -> CarrierClass {
    if detect_mds(image).is_some() {
        return CarrierClass::MdsOpaque;
    }
    let Some(cue) = cue else {
        return classify_data(image);
    };
    if cue.has_audio() {
        if !cue.all_audio() {
            return CarrierClass::MixedMode;
        }
        let any_riff = cue.entries.iter().any(|track| {
            track_head(track, files).is_some_and(detect_riff)
        });
        return if any_riff {
            CarrierClass::MalformedAudioWav
        } else {
            CarrierClass::RedBookAudio
        };
    }
    // Data-only cue: classify the first data track's user data.
    match split_tracks(cue, files) {
        Ok(payloads) => payloads
            .first()
            .map(|p| classify_data(&p.bytes))
            .unwrap_or(CarrierClass::Unknown),
        Err(_) => CarrierClass::Unknown,
    }
}

/// First deframed sector of a track, if the source file holds it.
fn track_head<'a>(
    track: &crate::sector::TrackDescriptor,
    files: &'a BTreeMap<String, Vec<u8>>,
) -> Option<&'a [u8]> {
    let data = files.get(&track.source_file)?;
    let raw = track.mode.raw_size();
    let start = track.extent_start() as usize * raw;
    data.get(start..start + raw).map(|sector| track.mode.deframe(sector))
}

/// Classifies a single data payload (an ISO/UDF/HFS+ image).
pub fn classify_data(payload: &[u8]) -> CarrierClass {
    if detect_mds(payload).is_some() {
        return CarrierClass::MdsOpaque;
    }
    if detect_hfsplus(payload).is_some() {
        return CarrierClass::HfsPlus;
    }
    let iso = detect_iso9660(payload).is_some();
    let udf = detect_udf(payload).is_some();
    if !iso {
        return if udf { CarrierClass::UdfDataDisk } else { CarrierClass::Unknown };
    }
    let video = iso_root_listing(payload)
        .map(|root| detect_dvd_video(&root))
        .unwrap_or(false);
    match (video, udf) {
        (true, _) => CarrierClass::DvdVideo,
        (false, true) => CarrierClass::UdfDataDisk,
        (false, false) => CarrierClass::IsoDataDisk,
    }
}

pub fn plan_for(class: CarrierClass) -> ProcessingPlan {
    use PlanStep::*;
    let (steps, rationale) = match class {
        CarrierClass::IsoDataDisk => (
            vec![KeepImageAsMaster, ExtractIsoFiles],
            "ISO 9660 data disc: keep the image, extract its files",
        ),
        CarrierClass::UdfDataDisk => (
            vec![KeepImageAsMaster, ExtractIsoFiles],
            "UDF bridge data disc: keep the image, extract files through the ISO 9660 tree",
        ),
        CarrierClass::DvdVideo => (
            vec![KeepImageAsMaster, ExtractIsoFiles],
            "DVD-Video (VIDEO_TS present): keep the image, extract the VOB/IFO files",
        ),
        CarrierClass::RedBookAudio => (
            vec![KeepImageAsMaster, SplitTracks, WrapAudioWav],
            "audio CD: split raw tracks and wrap each as WAV",
        ),
        CarrierClass::MixedMode => (
            vec![KeepImageAsMaster, SplitTracks, ExtractIsoFiles, WrapAudioWav],
            "mixed-mode CD: extract files from data tracks, wrap audio tracks as WAV (track-number order)",
        ),
        CarrierClass::MalformedAudioWav => (
            vec![KeepImageAsMaster, SplitTracks, CopyWavVerbatim],
            "audio-layout tracks already carry RIFF/WAVE headers: copy them verbatim",
        ),
        CarrierClass::HfsPlus => (
            vec![KeepImageAsMaster, FlagForManual],
            "HFS+ volume: catalog extraction is manual",
        ),
        CarrierClass::MdsOpaque => (
            vec![KeepImageAsMaster, FlagForManual],
            "MDS container: no public specification, handle manually",
        ),
        CarrierClass::Unknown => (
            vec![KeepImageAsMaster, FlagForManual],
            "no recognised signature",
        ),
    };
    ProcessingPlan {
        steps,
        rationale: format!("{class}: {rationale}"),
    }
}

/// Everything `identify` reports about one carrier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub families: Vec<VolumeInfo>,
    pub class: CarrierClass,
    pub plan: ProcessingPlan,
}

pub fn identify(
    image: &[u8],
    cue: Option<&CueSheet>,
    files: &BTreeMap<String, Vec<u8>>,
) -> Identification {
    let class = classify_carrier(image, cue, files);
    Identification {
        families: detect::detect_all(image),
        class,
        plan: plan_for(class),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PlanStep::*;

    fn position(plan: &ProcessingPlan, step: PlanStep) -> usize {
        plan.steps.iter().position(|s| *s == step).unwrap()
    }

    #[test]
    fn plan_invariants() {
        for class in CarrierClass::ALL {
            let plan = plan_for(class);
            assert_eq!(plan.steps[0], KeepImageAsMaster, "{class}");
        }
        let red = plan_for(CarrierClass::RedBookAudio);
        assert_eq!(red.steps, vec![KeepImageAsMaster, SplitTracks, WrapAudioWav]);
        let mixed = plan_for(CarrierClass::MixedMode);
        assert!(position(&mixed, SplitTracks) < position(&mixed, ExtractIsoFiles));
        assert!(position(&mixed, SplitTracks) < position(&mixed, WrapAudioWav));
        let bad = plan_for(CarrierClass::MalformedAudioWav);
        assert!(position(&bad, SplitTracks) < position(&bad, CopyWavVerbatim));
        for class in [CarrierClass::HfsPlus, CarrierClass::MdsOpaque, CarrierClass::Unknown] {
            assert_eq!(plan_for(class).steps, vec![KeepImageAsMaster, FlagForManual]);
        }
    }

    #[test]
    fn empty_input_is_unknown() {
        assert_eq!(classify(&[], None), CarrierClass::Unknown);
    }

    #[test]
    fn mds_wins_over_everything() {
        let mut img = b"MEDIA DESCRIPTOR".to_vec();
        img.resize(4096, 0);
        img[1024..1026].copy_from_slice(b"H+");
        assert_eq!(classify(&img, None), CarrierClass::MdsOpaque);
    }

    #[test]
    fn class_names_parse_back() {
        for class in CarrierClass::ALL {
            assert_eq!(class.name().parse::<CarrierClass>(), Ok(class));
        }
    }
}
