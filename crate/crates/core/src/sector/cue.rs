use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SectorMode, FRAMES_PER_SECOND};
use crate::text::decode_utf8_or_latin1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CueError {
    #[error("cue syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown track mode {token:?} on line {line}")]
    UnknownMode { line: usize, token: String },
    #[error("no tracks")]
    NoTracks,
    #[error("duplicate track number {number} on line {line}")]
    DuplicateTrack { line: usize, number: u8 },
}

/// One track of a cue sheet. Positions are in sectors relative to the start
/// of `source_file`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackDescriptor {
    pub number: u8,
    pub mode: SectorMode,
    pub source_file: String,
    /// Position of `INDEX 01`.
    pub start_sector: u64,
    /// Sectors from `start_sector` to the next track's first sector in the
    /// same file. `None` means "to the end of the file"; the length is then
    /// resolved against the file size when the track is split.
    pub length_sectors: Option<u64>,
    /// Sectors between `INDEX 00` and `INDEX 01` stored in the file. These are
    /// kept as payload, ahead of `start_sector`.
    pub pregap_sectors: u64,
}

impl TrackDescriptor {
    /// First sector of the track's payload, including any stored pregap.
    pub fn extent_start(&self) -> u64 {
        self.start_sector - self.pregap_sectors
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSheet {
    pub entries: Vec<TrackDescriptor>,
    pub source_files: Vec<String>,
}

impl CueSheet {
    pub fn tracks_in<'a>(&'a self, file: &'a str) -> impl Iterator<Item = &'a TrackDescriptor> {
        self.entries.iter().filter(move |t| t.source_file == file)
    }

    pub fn has_audio(&self) -> bool {
        self.entries.iter().any(|t| t.mode.is_audio())
    }

    pub fn all_audio(&self) -> bool {
        self.entries.iter().all(|t| t.mode.is_audio())
    }
}

/// Parses cue sheet bytes, decoding UTF-8 with a Latin-1 fallback.
pub fn parse_cue_bytes(bytes: &[u8]) -> Result<CueSheet, CueError> {
    parse_cue(&decode_utf8_or_latin1(bytes).0)
}

struct PendingTrack {
    line: usize,
    number: u8,
    mode: SectorMode,
    file_index: usize,
    indexes: Vec<(u8, u64)>,
}

pub fn parse_cue(text: &str) -> Result<CueSheet, CueError> {
    let mut files: Vec<String> = Vec::new();
    let mut pending: Vec<PendingTrack> = Vec::new();
    let mut numbers = BTreeSet::new();
    // Whether TRACK/INDEX lines may attach to the most recent track.
    let mut track_open = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw_line).map_err(|message| CueError::Syntax { line, message })?;
        let Some(keyword) = tokens.first() else {
            continue;
        };
        let syntax = |message: &str| CueError::Syntax {
            line,
            message: message.to_owned(),
        };
        match keyword.to_ascii_uppercase().as_str() {
            "FILE" => {
                let name = tokens.get(1).ok_or_else(|| syntax("FILE without a file name"))?;
                if name.is_empty() {
                    return Err(syntax("FILE with an empty file name"));
                }
                files.push(name.clone());
                track_open = false;
            }
            "TRACK" => {
                if files.is_empty() {
                    return Err(syntax("TRACK before any FILE"));
                }
                let number_token = tokens.get(1).ok_or_else(|| syntax("TRACK without a number"))?;
                let number: u8 = number_token
                    .parse()
                    .ok()
                    .filter(|n| (1..=99).contains(n))
                    .ok_or_else(|| syntax("track number must be 01-99"))?;
                let mode_token = tokens.get(2).ok_or_else(|| syntax("TRACK without a mode"))?;
                let mode = SectorMode::from_cue_token(mode_token).ok_or_else(|| {
                    CueError::UnknownMode {
                        line,
                        token: mode_token.clone(),
                    }
                })?;
                if !numbers.insert(number) {
                    return Err(CueError::DuplicateTrack { line, number });
                }
                if pending.last().is_some_and(|p| p.number > number) {
                    return Err(syntax("track numbers must increase"));
                }
                pending.push(PendingTrack {
                    line,
                    number,
                    mode,
                    file_index: files.len() - 1,
                    indexes: Vec::new(),
                });
                track_open = true;
            }
            "INDEX" => {
                if !track_open {
                    return Err(syntax("INDEX outside a TRACK"));
                }
                let track = pending.last_mut().expect("track_open implies a track");
                let number: u8 = tokens
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .filter(|n| *n <= 99)
                    .ok_or_else(|| syntax("INDEX number must be 00-99"))?;
                let position = tokens
                    .get(2)
                    .ok_or_else(|| syntax("INDEX without a position"))
                    .and_then(|t| parse_msf(t).ok_or_else(|| syntax("malformed MM:SS:FF position")))?;
                if let Some(&(prev_number, prev_pos)) = track.indexes.last() {
                    if number <= prev_number {
                        return Err(syntax("INDEX numbers must increase within a track"));
                    }
                    if position < prev_pos {
                        return Err(syntax("INDEX positions must not decrease"));
                    }
                }
                track.indexes.push((number, position));
            }
            "PREGAP" | "POSTGAP" => {
                if !track_open {
                    return Err(syntax("gap directive outside a TRACK"));
                }
                tokens
                    .get(1)
                    .and_then(|t| parse_msf(t))
                    .ok_or_else(|| syntax("malformed MM:SS:FF gap length"))?;
            }
            "REM" | "TITLE" | "PERFORMER" | "SONGWRITER" | "CATALOG" | "ISRC" | "FLAGS"
            | "CDTEXTFILE" => {}
            other => return Err(syntax(&format!("unknown command {other}"))),
        }
    }

    if pending.is_empty() {
        return Err(CueError::NoTracks);
    }

    let mut entries = Vec::with_capacity(pending.len());
    for track in &pending {
        let start = track
            .indexes
            .iter()
            .find(|(n, _)| *n == 1)
            .map(|(_, pos)| *pos)
            .ok_or(CueError::Syntax {
                line: track.line,
                message: format!("track {:02} has no INDEX 01", track.number),
            })?;
        let pregap = track
            .indexes
            .iter()
            .find(|(n, _)| *n == 0)
            .map(|(_, pos)| start - pos)
            .unwrap_or(0);
        entries.push(TrackDescriptor {
            number: track.number,
            mode: track.mode,
            source_file: files[track.file_index].clone(),
            start_sector: start,
            length_sectors: None,
            pregap_sectors: pregap,
        });
    }

    for i in 0..entries.len() {
        let Some(next) = entries.get(i + 1) else { break };
        if pending[i + 1].file_index != pending[i].file_index {
            continue;
        }
        let next_start = next.extent_start();
        let this = &entries[i];
        if next_start <= this.start_sector {
            return Err(CueError::Syntax {
                line: pending[i + 1].line,
                message: format!(
                    "track {:02} starts before track {:02} ends",
                    next.number, this.number
                ),
            });
        }
        entries[i].length_sectors = Some(next_start - this.start_sector);
    }

    Ok(CueSheet {
        entries,
        source_files: files,
    })
}

fn parse_msf(token: &str) -> Option<u64> {
    let mut parts = token.split(':');
    let (m, s, f) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let all_digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !(all_digits(m) && all_digits(s) && all_digits(f)) {
        return None;
    }
    let (m, s, f): (u64, u64, u64) = (m.parse().ok()?, s.parse().ok()?, f.parse().ok()?);
    if s >= 60 || f >= FRAMES_PER_SECOND {
        return None;
    }
    Some((m * 60 + s) * FRAMES_PER_SECOND + f)
}

fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = line.trim().chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut token = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => token.push(ch),
                    None => return Err("unterminated quoted string".into()),
                }
            }
            tokens.push(token);
        } else {
            let mut token = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                token.push(ch);
                chars.next();
            }
            tokens.push(token);
        }
    }
    Ok(tokens)
}
