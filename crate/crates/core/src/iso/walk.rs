use std::collections::HashSet;

use chrono::{DateTime, Duration, NaiveDate, Utc};

use super::{
    DirectoryTree, IsoEntry, IsoError, IsoOptions, DESCRIPTOR_PRIMARY, DESCRIPTOR_SIZE,
    DESCRIPTOR_SUPPLEMENTARY, DESCRIPTOR_TERMINATOR, JOLIET_ESCAPES, STANDARD_ID,
    SYSTEM_AREA_SECTORS,
};

const MAX_DEPTH: usize = 64;
const MIN_RECORD_LEN: usize = 34;

const FLAG_DIRECTORY: u8 = 0x02;
const FLAG_ASSOCIATED: u8 = 0x04;
const FLAG_MULTI_EXTENT: u8 = 0x80;

/// The parts of a primary or Joliet volume descriptor the walker needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeDescriptorRef {
    pub tree: DirectoryTree,
    pub volume_id: String,
    pub block_size: usize,
    pub root_lba: u32,
    pub root_len: u32,
}

/// Iterates `(type, descriptor bytes)` over the volume descriptor set,
/// stopping at the terminator or at the first sector without "CD001".
pub(crate) fn descriptors(image: &[u8]) -> impl Iterator<Item = (u8, &[u8])> {
    image
        .chunks_exact(DESCRIPTOR_SIZE)
        .skip(SYSTEM_AREA_SECTORS)
        .take_while(|d| &d[1..6] == STANDARD_ID)
        .scan(false, |done, d| {
            if *done {
                return None;
            }
            *done = d[0] == DESCRIPTOR_TERMINATOR;
            Some((d[0], d))
        })
}

pub fn primary_descriptor(image: &[u8]) -> Option<VolumeDescriptorRef> {
    descriptors(image)
        .find(|(kind, _)| *kind == DESCRIPTOR_PRIMARY)
        .and_then(|(_, d)| parse_descriptor(d, DirectoryTree::Primary))
}

fn joliet_descriptor(image: &[u8]) -> Option<VolumeDescriptorRef> {
    descriptors(image)
        .find(|(kind, d)| {
            *kind == DESCRIPTOR_SUPPLEMENTARY && JOLIET_ESCAPES.iter().any(|e| &d[88..91] == *e)
        })
        .and_then(|(_, d)| parse_descriptor(d, DirectoryTree::Joliet))
}

fn parse_descriptor(d: &[u8], tree: DirectoryTree) -> Option<VolumeDescriptorRef> {
    let block_size = u16::from_le_bytes([d[128], d[129]]) as usize;
    if block_size == 0 {
        return None;
    }
    let root = &d[156..190];
    let volume_id = match tree {
        DirectoryTree::Primary => d[40..72].iter().map(|&b| char::from(b)).collect::<String>(),
        DirectoryTree::Joliet => decode_ucs2(&d[40..72]),
    };
    Some(VolumeDescriptorRef {
        tree,
        volume_id: volume_id.trim_end_matches([' ', '\0']).to_owned(),
        block_size,
        root_lba: le_u32(&root[2..6]),
        root_len: le_u32(&root[10..14]),
    })
}

/// Lists the primary directory tree, depth first.
pub fn iso_list(image: &[u8]) -> Result<Vec<IsoEntry>, IsoError> {
    iso_list_with(image, IsoOptions::default())
}

pub fn iso_list_with(image: &[u8], options: IsoOptions) -> Result<Vec<IsoEntry>, IsoError> {
    let volume = select_volume(image, options)?;
    let mut walker = Walker::new(image, &volume);
    walker.walk(volume.root_lba, volume.root_len, "", 0, true)?;
    Ok(walker.entries)
}

/// Lists only the root directory; subdirectory extents are not visited.
pub fn iso_root_listing(image: &[u8]) -> Result<Vec<IsoEntry>, IsoError> {
    let volume = select_volume(image, IsoOptions::default())?;
    let mut walker = Walker::new(image, &volume);
    walker.walk(volume.root_lba, volume.root_len, "", 0, false)?;
    Ok(walker.entries)
}

pub(crate) fn select_volume(image: &[u8], options: IsoOptions) -> Result<VolumeDescriptorRef, IsoError> {
    let joliet = if options.joliet { joliet_descriptor(image) } else { None };
    joliet.or_else(|| primary_descriptor(image)).ok_or(IsoError::NotIso)
}

struct Walker<'a> {
    image: &'a [u8],
    block_size: usize,
    joliet: bool,
    visited: HashSet<u32>,
    entries: Vec<IsoEntry>,
}

impl<'a> Walker<'a> {
    fn new(image: &'a [u8], volume: &VolumeDescriptorRef) -> Self {
        Walker {
            image,
            block_size: volume.block_size,
            joliet: volume.tree == DirectoryTree::Joliet,
            visited: HashSet::new(),
            entries: Vec::new(),
        }
    }

    fn walk(&mut self, lba: u32, len: u32, prefix: &str, depth: usize, recurse: bool) -> Result<(), IsoError> {
        if depth > MAX_DEPTH {
            return Err(IsoError::TooDeep(MAX_DEPTH));
        }
        if !self.visited.insert(lba) {
            return Err(IsoError::Cycle {
                lba,
                path: prefix.to_owned(),
            });
        }
        let start = lba as usize * self.block_size;
        let end = start + len as usize;
        if end > self.image.len() {
            return Err(IsoError::PastEnd {
                entry: if prefix.is_empty() { "/".into() } else { prefix.to_owned() },
                lba,
                offset: 0,
            });
        }

        let head = &self.image[start..end];
        let self_record = head.len() >= MIN_RECORD_LEN
            && head[0] as usize >= MIN_RECORD_LEN
            && head[32] == 1
            && head[33] == 0
            && le_u32(&head[2..6]) == lba;
        if !self_record {
            return Err(IsoError::MalformedRecord {
                lba,
                offset: 0,
                reason: "directory extent does not start with its own \".\" record".into(),
            });
        }

        let mut pos = start;
        while pos < end {
            let rel = pos - start;
            let record_len = self.image[pos] as usize;
            if record_len == 0 {
                // Records never span blocks; a zero length pads to the next one.
                pos = start + (rel / self.block_size + 1) * self.block_size;
                continue;
            }
            let malformed = |reason: String| IsoError::MalformedRecord { lba, offset: rel, reason };
            if record_len < MIN_RECORD_LEN {
                return Err(malformed(format!("record length {record_len} is below {MIN_RECORD_LEN}")));
            }
            if pos + record_len > end {
                return Err(malformed(format!(
                    "record length {record_len} runs past the directory extent"
                )));
            }
            let record = &self.image[pos..pos + record_len];
            pos += record_len;

            let name_len = record[32] as usize;
            if 33 + name_len > record_len {
                return Err(malformed(format!(
                    "identifier length {name_len} does not fit record length {record_len}"
                )));
            }
            let raw_name = &record[33..33 + name_len];
            if name_len == 1 && (raw_name[0] == 0 || raw_name[0] == 1) {
                continue;
            }
            let flags = record[25];
            if record[1] != 0 {
                return Err(malformed("extended attribute records are not supported".into()));
            }
            if record[26] != 0 || record[27] != 0 {
                return Err(malformed("interleaved file".into()));
            }
            if flags & FLAG_MULTI_EXTENT != 0 {
                return Err(malformed("multi-extent file".into()));
            }
            if flags & FLAG_ASSOCIATED != 0 {
                return Err(malformed("associated file".into()));
            }

            let is_directory = flags & FLAG_DIRECTORY != 0;
            let (name, version_suffix_stripped) = self.decode_name(raw_name, is_directory);
            if name.is_empty()
                || name == "."
                || name == ".."
                || name.contains(['/', '\\', '\0'])
            {
                return Err(malformed(format!("unusable identifier {name:?}")));
            }
            let path = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}/{name}")
            };

            let extent_lba = le_u32(&record[2..6]);
            let data_length = le_u32(&record[10..14]);
            if !is_directory
                && extent_lba as usize * self.block_size + data_length as usize > self.image.len()
            {
                return Err(IsoError::PastEnd {
                    entry: path,
                    lba,
                    offset: rel,
                });
            }

            let raw_date: [u8; 7] = record[18..25].try_into().unwrap();
            let (recorded_at, timestamp_flagged) = decode_recording_date(&raw_date);
            self.entries.push(IsoEntry {
                path: path.clone(),
                is_directory,
                extent_lba,
                data_length,
                recorded_at,
                recorded_raw: hex::encode(raw_date),
                timestamp_flagged,
                version_suffix_stripped,
            });
            if is_directory && recurse {
                self.walk(extent_lba, data_length, &path, depth + 1, true)?;
            }
        }
        Ok(())
    }

    fn decode_name(&self, raw: &[u8], is_directory: bool) -> (String, bool) {
        let decoded = if self.joliet {
            decode_ucs2(raw)
        } else {
            raw.iter().map(|&b| char::from(b)).collect()
        };
        let (base, stripped) = match decoded.rfind(';') {
            Some(i) => (decoded[..i].to_owned(), true),
            None => (decoded, false),
        };
        // "README." is how an extensionless file is recorded.
        let base = if !is_directory && base.ends_with('.') && base.len() > 1 {
            base[..base.len() - 1].to_owned()
        } else {
            base
        };
        (base, stripped)
    }
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().unwrap())
}

fn decode_ucs2(raw: &[u8]) -> String {
    let units: Vec<u16> = raw
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    String::from_utf16_lossy(&units)
}

/// Converts the 7-byte directory record date to UTC. All-zero means "not
/// recorded"; anything else that does not form a valid date is flagged.
pub(crate) fn decode_recording_date(raw: &[u8; 7]) -> (Option<DateTime<Utc>>, bool) {
    if raw.iter().all(|&b| b == 0) {
        return (None, false);
    }
    let offset_quarters = raw[6] as i8;
    let valid_offset = (-48..=52).contains(&offset_quarters);
    let local = NaiveDate::from_ymd_opt(1900 + raw[0] as i32, raw[1] as u32, raw[2] as u32)
        .and_then(|d| d.and_hms_opt(raw[3] as u32, raw[4] as u32, raw[5] as u32));
    match local {
        Some(local) if valid_offset => {
            let utc = local - Duration::minutes(15 * offset_quarters as i64);
            (Some(utc.and_utc()), false)
        }
        _ => (None, true),
    }
}
