use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{detect_riff, CueSheet, TrackDescriptor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("source file {0:?} referenced by the cue sheet is missing")]
    MissingFile(String),
    #[error(
        "track {track:02}: {file:?} is {size} bytes, not a multiple of the {alignment}-byte raw sector size"
    )]
    Misaligned {
        track: u8,
        file: String,
        size: usize,
        alignment: usize,
    },
    #[error("track {track:02}: sectors {start}..{end} exceed the {available} sectors in {file:?}")]
    RangeExceedsFile {
        track: u8,
        file: String,
        start: u64,
        end: u64,
        available: u64,
    },
    #[error("tracks in {0:?} mix raw sector sizes")]
    MixedSectorSizes(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadKind {
    IsoData,
    RawAudio,
    WavWrappedAudio,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackPayload {
    /// Descriptor with `length_sectors` resolved against the file size.
    pub track: TrackDescriptor,
    /// Deframed user data, stored pregap first.
    pub bytes: Vec<u8>,
    pub suggested_kind: PayloadKind,
}

/// Cuts every track of `cue` out of its source file and strips sector framing.
pub fn split_tracks(
    cue: &CueSheet,
    bin_bytes_by_file: &BTreeMap<String, Vec<u8>>,
) -> Result<Vec<TrackPayload>, SplitError> {
    let mut payloads = Vec::with_capacity(cue.entries.len());
    for file in &cue.source_files {
        let mut tracks = cue.tracks_in(file).peekable();
        let Some(first) = tracks.peek() else { continue };
        let raw_size = first.mode.raw_size();
        let data = bin_bytes_by_file
            .get(file)
            .ok_or_else(|| SplitError::MissingFile(file.clone()))?;

        for track in tracks {
            if track.mode.raw_size() != raw_size {
                return Err(SplitError::MixedSectorSizes(file.clone()));
            }
            if data.len() % raw_size != 0 {
                return Err(SplitError::Misaligned {
                    track: track.number,
                    file: file.clone(),
                    size: data.len(),
                    alignment: raw_size,
                });
            }
            let available = (data.len() / raw_size) as u64;
            let length = match track.length_sectors {
                Some(len) => len,
                None => available.saturating_sub(track.start_sector),
            };
            let end = track.start_sector + length;
            if length == 0 || end > available {
                return Err(SplitError::RangeExceedsFile {
                    track: track.number,
                    file: file.clone(),
                    start: track.extent_start(),
                    end: end.max(track.start_sector + 1),
                    available,
                });
            }

            let start_byte = track.extent_start() as usize * raw_size;
            let end_byte = end as usize * raw_size;
            let user = track.mode.user_data_size();
            let mut bytes =
                Vec::with_capacity((end - track.extent_start()) as usize * user);
            for sector in data[start_byte..end_byte].chunks_exact(raw_size) {
                bytes.extend_from_slice(track.mode.deframe(sector));
            }

            let suggested_kind = if !track.mode.is_audio() {
                PayloadKind::IsoData
            } else if detect_riff(&bytes) {
                PayloadKind::WavWrappedAudio
            } else {
                PayloadKind::RawAudio
            };
            let mut resolved = track.clone();
            resolved.length_sectors = Some(length);
            payloads.push(TrackPayload {
                track: resolved,
                bytes,
                suggested_kind,
            });
        }
    }
    payloads.sort_by_key(|p| p.track.number);
    Ok(payloads)
}
