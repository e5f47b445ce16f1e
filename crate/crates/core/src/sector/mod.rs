//! Raw CD sector primitives: sector framing, cue sheets, track splitting and
//! WAV synthesis.
//!
//! Framing constants follow the Yellow Book / ECMA-130 layout. A raw sector is
//! 2352 bytes; Mode 1 carries 2048 bytes of user data after a 12-byte sync
//! pattern and a 4-byte header, followed by 288 bytes of EDC/ECC. EDC and ECC
//! are dropped on read and never verified.

mod cue;
mod split;
mod wav;

use serde::{Deserialize, Serialize};

pub use cue::{parse_cue, parse_cue_bytes, CueError, CueSheet, TrackDescriptor};
pub use split::{split_tracks, PayloadKind, SplitError, TrackPayload};
pub use wav::{detect_riff, riff_declared_len, wrap_wav, WAV_HEADER_LEN};

/// Raw bytes in a full CD sector.
pub const RAW_SECTOR_SIZE: usize = 2352;
/// User data bytes in a Mode 1 (or Mode 2 Form 1) sector.
pub const DATA_SECTOR_SIZE: usize = 2048;
/// Sync pattern plus address/mode header.
pub const SECTOR_HEADER_LEN: usize = 16;
/// Mode 2 Form 1 sub-header length (two copies of the 4-byte sub-header).
pub const MODE2_SUBHEADER_LEN: usize = 8;
/// Red Book frames (sectors) per second.
pub const FRAMES_PER_SECOND: u64 = 75;

pub const SYNC_PATTERN: [u8; 12] = [
    0x00, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0x00,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SectorMode {
    Audio2352,
    #[serde(rename = "Mode1_2048")]
    Mode1_2048,
    #[serde(rename = "Mode1_2352")]
    Mode1_2352,
    #[serde(rename = "Mode2_2352")]
    Mode2_2352,
    #[serde(rename = "Mode2Form1_2352")]
    Mode2Form1_2352,
}

impl SectorMode {
    pub const ALL: [SectorMode; 5] = [
        SectorMode::Audio2352,
        SectorMode::Mode1_2048,
        SectorMode::Mode1_2352,
        SectorMode::Mode2_2352,
        SectorMode::Mode2Form1_2352,
    ];

    /// Bytes each sector occupies in the image file.
    pub fn raw_size(self) -> usize {
        match self {
            SectorMode::Mode1_2048 => DATA_SECTOR_SIZE,
            _ => RAW_SECTOR_SIZE,
        }
    }

    /// Bytes of user data left after deframing.
    pub fn user_data_size(self) -> usize {
        match self {
            SectorMode::Audio2352 => RAW_SECTOR_SIZE,
            SectorMode::Mode1_2048 | SectorMode::Mode1_2352 | SectorMode::Mode2Form1_2352 => {
                DATA_SECTOR_SIZE
            }
            SectorMode::Mode2_2352 => RAW_SECTOR_SIZE - SECTOR_HEADER_LEN,
        }
    }

    /// Offset of the user data inside one raw sector.
    pub fn user_data_offset(self) -> usize {
        match self {
            SectorMode::Audio2352 | SectorMode::Mode1_2048 => 0,
            SectorMode::Mode1_2352 | SectorMode::Mode2_2352 => SECTOR_HEADER_LEN,
            SectorMode::Mode2Form1_2352 => SECTOR_HEADER_LEN + MODE2_SUBHEADER_LEN,
        }
    }

    pub fn is_audio(self) -> bool {
        self == SectorMode::Audio2352
    }

    /// Mode 2 payloads are extracted without interpreting the sub-header and
    /// are flagged in pipeline output.
    pub fn is_mode2(self) -> bool {
        matches!(self, SectorMode::Mode2_2352 | SectorMode::Mode2Form1_2352)
    }

    /// The token used on a cue sheet `TRACK` line.
    pub fn cue_token(self) -> &'static str {
        match self {
            SectorMode::Audio2352 => "AUDIO",
            SectorMode::Mode1_2048 => "MODE1/2048",
            SectorMode::Mode1_2352 => "MODE1/2352",
            // Form 1 is indistinguishable on the cue sheet.
            SectorMode::Mode2_2352 | SectorMode::Mode2Form1_2352 => "MODE2/2352",
        }
    }

    pub fn from_cue_token(token: &str) -> Option<SectorMode> {
        match token.to_ascii_uppercase().as_str() {
            "AUDIO" => Some(SectorMode::Audio2352),
            "MODE1/2048" => Some(SectorMode::Mode1_2048),
            "MODE1/2352" => Some(SectorMode::Mode1_2352),
            "MODE2/2352" => Some(SectorMode::Mode2_2352),
            _ => None,
        }
    }

    /// Copies the user data of one raw sector.
    pub fn deframe(self, raw: &[u8]) -> &[u8] {
        let start = self.user_data_offset();
        &raw[start..start + self.user_data_size()]
    }
}

/// Converts an absolute sector address to the BCD minute/second/frame triple
/// written into a data sector header (address includes the 150-sector lead-in
/// offset).
pub fn sector_address_bcd(lba: u64) -> [u8; 3] {
    let absolute = lba + 2 * FRAMES_PER_SECOND;
    let minutes = absolute / (60 * FRAMES_PER_SECOND);
    let seconds = (absolute / FRAMES_PER_SECOND) % 60;
    let frames = absolute % FRAMES_PER_SECOND;
    let bcd = |v: u64| (((v / 10) % 10) << 4 | (v % 10)) as u8;
    [bcd(minutes), bcd(seconds), bcd(frames)]
}

/// Formats a sector count as cue sheet `MM:SS:FF`.
pub fn format_msf(sectors: u64) -> String {
    format!(
        "{:02}:{:02}:{:02}",
        sectors / (60 * FRAMES_PER_SECOND),
        (sectors / FRAMES_PER_SECOND) % 60,
        sectors % FRAMES_PER_SECOND
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_invariants_hold_for_every_mode() {
        for mode in SectorMode::ALL {
            assert!([2048, 2352].contains(&mode.raw_size()));
            assert!([2048, 2336, 2352].contains(&mode.user_data_size()));
            assert!(mode.user_data_offset() + mode.user_data_size() <= mode.raw_size());
        }
    }

    #[test]
    fn cue_tokens_round_trip() {
        for mode in [
            SectorMode::Audio2352,
            SectorMode::Mode1_2048,
            SectorMode::Mode1_2352,
            SectorMode::Mode2_2352,
        ] {
            assert_eq!(SectorMode::from_cue_token(mode.cue_token()), Some(mode));
        }
        assert_eq!(SectorMode::from_cue_token("mode1/2352"), Some(SectorMode::Mode1_2352));
        assert_eq!(SectorMode::from_cue_token("CDG"), None);
    }

    #[test]
    fn msf_formatting() {
        assert_eq!(format_msf(0), "00:00:00");
        assert_eq!(format_msf(150), "00:02:00");
        assert_eq!(format_msf(60 * 75 + 74), "01:00:74");
    }

    #[test]
    fn header_address_includes_lead_in() {
        assert_eq!(sector_address_bcd(0), [0x00, 0x02, 0x00]);
        assert_eq!(sector_address_bcd(16), [0x00, 0x02, 0x16]);
    }
}
