//! Signature-level detection of filesystem and container families.
//!
//! Every detector is independent and total: arbitrary input yields either a
//! [`VolumeInfo`] or `None`, never a panic. Precedence between overlapping
//! detections (a UDF bridge disc is also ISO 9660) is decided by
//! [`crate::classify`].

use serde::{Deserialize, Serialize};

use crate::iso::{self, IsoEntry, DESCRIPTOR_SIZE, SYSTEM_AREA_SECTORS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VolumeFamily {
    Iso9660,
    Udf,
    HfsPlus,
    MdsContainer,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeInfo {
    pub family: VolumeFamily,
    pub volume_id: String,
    pub block_size: u32,
    pub detail: String,
}

pub const MDS_SIGNATURE: &[u8; 16] = b"MEDIA DESCRIPTOR";
pub const HFS_PLUS_SIGNATURE: &[u8; 2] = b"H+";
pub const HFSX_SIGNATURE: &[u8; 2] = b"HX";
pub const HFS_HEADER_OFFSET: usize = 1024;

/// Identifiers allowed in the ECMA-167 volume recognition sequence.
const VRS_IDENTIFIERS: [&[u8; 5]; 7] = [b"BEA01", b"NSR02", b"NSR03", b"TEA01", b"CD001", b"BOOT2", b"CDW02"];

pub fn detect_iso9660(image: &[u8]) -> Option<VolumeInfo> {
    let pvd = iso::primary_descriptor(image)?;
    Some(VolumeInfo {
        family: VolumeFamily::Iso9660,
        volume_id: pvd.volume_id,
        block_size: pvd.block_size as u32,
        detail: String::new(),
    })
}

/// Scans the volume recognition sequence for a BEA01 .. NSR0x .. TEA01 run.
pub fn detect_udf(image: &[u8]) -> Option<VolumeInfo> {
    let mut seen_bea = false;
    let mut nsr: Option<&str> = None;
    let mut seen_tea = false;
    for sector in image.chunks_exact(DESCRIPTOR_SIZE).skip(SYSTEM_AREA_SECTORS) {
        let id = &sector[1..6];
        if !VRS_IDENTIFIERS.iter().any(|known| id == *known) {
            break;
        }
        match id {
            b"BEA01" => seen_bea = true,
            b"NSR02" if seen_bea => nsr = Some("NSR02"),
            b"NSR03" if seen_bea => nsr = Some("NSR03"),
            b"TEA01" if seen_bea => {
                seen_tea = true;
                break;
            }
            _ => {}
        }
    }
    let version = nsr?;
    let detail = if seen_tea {
        version.to_owned()
    } else {
        format!("{version} (no TEA01)")
    };
    Some(VolumeInfo {
        family: VolumeFamily::Udf,
        volume_id: String::new(),
        block_size: DESCRIPTOR_SIZE as u32,
        detail,
    })
}

pub fn detect_hfsplus(image: &[u8]) -> Option<VolumeInfo> {
    let signature = image.get(HFS_HEADER_OFFSET..HFS_HEADER_OFFSET + 2)?;
    let detail = match signature {
        s if s == HFS_PLUS_SIGNATURE => "HFS+",
        s if s == HFSX_SIGNATURE => "HFSX",
        _ => return None,
    };
    // Allocation block size, big endian, at offset 40 of the volume header.
    let block_size = image
        .get(HFS_HEADER_OFFSET + 40..HFS_HEADER_OFFSET + 44)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .filter(|&b| b > 0)
        .unwrap_or(512);
    Some(VolumeInfo {
        family: VolumeFamily::HfsPlus,
        volume_id: String::new(),
        block_size,
        detail: detail.to_owned(),
    })
}

/// Signature check only; MDS contents are never parsed.
pub fn detect_mds(image: &[u8]) -> Option<VolumeInfo> {
    if !image.starts_with(MDS_SIGNATURE) {
        return None;
    }
    Some(VolumeInfo {
        family: VolumeFamily::MdsContainer,
        volume_id: String::new(),
        block_size: DESCRIPTOR_SIZE as u32,
        detail: "signature only".into(),
    })
}

/// True when the root listing holds a top-level `VIDEO_TS` directory.
pub fn detect_dvd_video(entries: &[IsoEntry]) -> bool {
    entries
        .iter()
        .any(|e| e.is_directory && !e.path.contains('/') && e.path.eq_ignore_ascii_case("VIDEO_TS"))
}

/// Runs every byte-level detector.
pub fn detect_all(image: &[u8]) -> Vec<VolumeInfo> {
    [detect_mds, detect_hfsplus, detect_iso9660, detect_udf]
        .iter()
        .filter_map(|detect| detect(image))
        .collect()
}
