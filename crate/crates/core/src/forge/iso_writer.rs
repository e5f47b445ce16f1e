//! Minimal ISO 9660 mastering for test fixtures: primary volume descriptor,
//! optional Joliet supplementary descriptor, optional UDF recognition
//! sequence, both L and M path tables and both-endian fields throughout.

use std::collections::BTreeMap;

use super::ForgeError;
use crate::iso::{DESCRIPTOR_SIZE, STANDARD_ID, SYSTEM_AREA_SECTORS};

const BLOCK: usize = DESCRIPTOR_SIZE;
/// 2015-03-01 12:00:00 GMT, as a directory record date.
const RECORD_DATE: [u8; 7] = [115, 3, 1, 12, 0, 0, 0];
const VOLUME_DATE: &[u8; 16] = b"2015030112000000";

pub(crate) struct IsoSource<'a> {
    pub volume_id: &'a str,
    /// Path -> file bytes; `None` marks an (empty) directory.
    pub nodes: &'a BTreeMap<String, Option<Vec<u8>>>,
    pub joliet: bool,
    pub udf_bridge: bool,
}

struct Dir {
    primary: Vec<u8>,
    joliet: Vec<u8>,
    parent: usize,
    depth: usize,
    children_dirs: Vec<usize>,
    files: Vec<usize>,
    primary_lba: u32,
    primary_size: u32,
    joliet_lba: u32,
    joliet_size: u32,
}

struct File<'a> {
    primary: Vec<u8>,
    joliet: Vec<u8>,
    data: &'a [u8],
    lba: u32,
}

pub(crate) fn build_iso(src: &IsoSource<'_>) -> Result<Vec<u8>, ForgeError> {
    if src.volume_id.len() > 32 || !src.volume_id.bytes().all(is_d_char) {
        return Err(ForgeError::NotRepresentable {
            path: src.volume_id.to_owned(),
            reason: "volume identifier must be at most 32 d-characters".into(),
        });
    }

    let mut dirs = vec![Dir {
        primary: vec![0],
        joliet: vec![0],
        parent: 0,
        depth: 0,
        children_dirs: Vec::new(),
        files: Vec::new(),
        primary_lba: 0,
        primary_size: 0,
        joliet_lba: 0,
        joliet_size: 0,
    }];
    let mut files: Vec<File> = Vec::new();
    let mut dir_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut mangle_counter = 0u32;

    // Intermediate directories are created on demand.
    for (path, content) in src.nodes {
        let parts: Vec<&str> = path.split('/').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(ForgeError::NotRepresentable {
                path: path.clone(),
                reason: "empty path component".into(),
            });
        }
        let mut parent = 0usize;
        let mut prefix = String::new();
        let dir_parts = if content.is_none() { &parts[..] } else { &parts[..parts.len() - 1] };
        for part in dir_parts {
            if !prefix.is_empty() {
                prefix.push('/');
            }
            prefix.push_str(part);
            if let Some(&idx) = dir_index.get(&prefix) {
                parent = idx;
                continue;
            }
            let depth = dirs[parent].depth + 1;
            if depth > 8 && !src.joliet {
                return Err(ForgeError::NotRepresentable {
                    path: path.clone(),
                    reason: "more than 8 directory levels".into(),
                });
            }
            let (primary, joliet) = names(part, true, src.joliet, &mut mangle_counter, path)?;
            dirs.push(Dir {
                primary,
                joliet,
                parent,
                depth,
                children_dirs: Vec::new(),
                files: Vec::new(),
                primary_lba: 0,
                primary_size: 0,
                joliet_lba: 0,
                joliet_size: 0,
            });
            let idx = dirs.len() - 1;
            dirs[parent].children_dirs.push(idx);
            dir_index.insert(prefix.clone(), idx);
            parent = idx;
        }
        if let Some(data) = content {
            let name = parts[parts.len() - 1];
            let (primary, joliet) = names(name, false, src.joliet, &mut mangle_counter, path)?;
            files.push(File {
                primary,
                joliet,
                data,
                lba: 0,
            });
            let idx = files.len() - 1;
            dirs[parent].files.push(idx);
        }
    }

    for tree_joliet in [false, true] {
        if tree_joliet && !src.joliet {
            continue;
        }
        for d in 0..dirs.len() {
            let mut ids: Vec<&[u8]> = dirs[d]
                .children_dirs
                .iter()
                .map(|&c| pick(&dirs[c].primary, &dirs[c].joliet, tree_joliet))
                .chain(dirs[d].files.iter().map(|&f| pick(&files[f].primary, &files[f].joliet, tree_joliet)))
                .collect();
            ids.sort();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(ForgeError::NotRepresentable {
                    path: String::from_utf8_lossy(ids.windows(2).find(|w| w[0] == w[1]).unwrap()[0]).into(),
                    reason: "duplicate identifier in one directory".into(),
                });
            }
        }
    }

    // Sector allocation.
    let mut next = SYSTEM_AREA_SECTORS as u32;
    let pvd_lba = next;
    next += 1;
    let svd_lba = src.joliet.then(|| {
        next += 1;
        next - 1
    });
    let terminator_lba = next;
    next += 1;
    let vrs_lba = src.udf_bridge.then(|| {
        next += 3;
        next - 3
    });

    let order = path_table_order(&dirs);
    let primary_table = path_table(&dirs, &order, false);
    let joliet_table = path_table(&dirs, &order, true);
    let table_sectors = sectors_for(primary_table.len()) as u32;
    let (p_l, p_m) = (next, next + table_sectors);
    next += 2 * table_sectors;
    let (j_l, j_m, j_table_sectors) = if src.joliet {
        let s = sectors_for(joliet_table.len()) as u32;
        let out = (next, next + s, s);
        next += 2 * s;
        out
    } else {
        (0, 0, 0)
    };

    for tree_joliet in [false, true] {
        if tree_joliet && !src.joliet {
            continue;
        }
        for &d in &order {
            let size = directory_size(&dirs, &files, d, tree_joliet) as u32;
            let dir = &mut dirs[d];
            if tree_joliet {
                dir.joliet_lba = next;
                dir.joliet_size = size;
            } else {
                dir.primary_lba = next;
                dir.primary_size = size;
            }
            next += size / BLOCK as u32;
        }
    }
    for f in files.iter_mut() {
        f.lba = next;
        next += sectors_for(f.data.len()) as u32;
    }
    let total_sectors = next as usize;

    let mut image = vec![0u8; total_sectors * BLOCK];
    let root_primary = dir_record(&[0], dirs[0].primary_lba, dirs[0].primary_size, true);
    write_descriptor(
        &mut image[pvd_lba as usize * BLOCK..][..BLOCK],
        1,
        src.volume_id.as_bytes(),
        false,
        total_sectors as u32,
        primary_table.len() as u32,
        (p_l, p_m),
        &root_primary,
    );
    if let Some(lba) = svd_lba {
        let root_joliet = dir_record(&[0], dirs[0].joliet_lba, dirs[0].joliet_size, true);
        write_descriptor(
            &mut image[lba as usize * BLOCK..][..BLOCK],
            2,
            &ucs2(src.volume_id),
            true,
            total_sectors as u32,
            joliet_table.len() as u32,
            (j_l, j_m),
            &root_joliet,
        );
    }
    let t = &mut image[terminator_lba as usize * BLOCK..][..BLOCK];
    t[0] = 255;
    t[1..6].copy_from_slice(STANDARD_ID);
    t[6] = 1;
    if let Some(lba) = vrs_lba {
        for (i, id) in [b"BEA01", b"NSR02", b"TEA01"].iter().enumerate() {
            let s = &mut image[(lba as usize + i) * BLOCK..][..BLOCK];
            s[0] = 0;
            s[1..6].copy_from_slice(*id);
            s[6] = 1;
        }
    }

    // Table sizes were fixed above; the LBAs are only known now.
    write_at(&mut image, p_l, &path_table(&dirs, &order, false));
    write_at(&mut image, p_m, &path_table_big_endian(&dirs, &order, false));
    if src.joliet {
        debug_assert!(j_table_sectors > 0);
        write_at(&mut image, j_l, &path_table(&dirs, &order, true));
        write_at(&mut image, j_m, &path_table_big_endian(&dirs, &order, true));
    }

    for tree_joliet in [false, true] {
        if tree_joliet && !src.joliet {
            continue;
        }
        for d in 0..dirs.len() {
            let extent = directory_extent(&dirs, &files, d, tree_joliet);
            let lba = if tree_joliet { dirs[d].joliet_lba } else { dirs[d].primary_lba };
            write_at(&mut image, lba, &extent);
        }
    }
    for f in &files {
        write_at(&mut image, f.lba, f.data);
    }
    Ok(image)
}

fn pick<'a>(primary: &'a [u8], joliet: &'a [u8], tree_joliet: bool) -> &'a [u8] {
    if tree_joliet {
        joliet
    } else {
        primary
    }
}

fn is_d_char(b: u8) -> bool {
    b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_'
}

/// Primary (8.3, with `;1` for files) and Joliet (UCS-2) identifiers.
fn names(
    name: &str,
    is_dir: bool,
    joliet: bool,
    counter: &mut u32,
    path: &str,
) -> Result<(Vec<u8>, Vec<u8>), ForgeError> {
    let not_rep = |reason: &str| ForgeError::NotRepresentable {
        path: path.to_owned(),
        reason: reason.to_owned(),
    };
    let strict = if is_dir {
        (1..=8).contains(&name.len()) && name.bytes().all(is_d_char)
    } else {
        let (base, ext) = name.split_once('.').unwrap_or((name, ""));
        (1..=8).contains(&base.len())
            && ext.len() <= 3
            && base.bytes().all(is_d_char)
            && ext.bytes().all(is_d_char)
    };

    let primary = if strict {
        let mut id = name.as_bytes().to_vec();
        if !is_dir {
            if !name.contains('.') {
                id.push(b'.');
            }
            id.extend_from_slice(b";1");
        }
        id
    } else if joliet {
        *counter += 1;
        if is_dir {
            format!("D{:07}", *counter).into_bytes()
        } else {
            let ext: String = name
                .rsplit_once('.')
                .map(|(_, e)| e.to_ascii_uppercase())
                .filter(|e| e.len() <= 3 && e.bytes().all(is_d_char))
                .unwrap_or_default();
            format!("F{:07}.{ext};1", *counter).into_bytes()
        }
    } else {
        return Err(not_rep("not an 8.3 upper-case ISO 9660 name (enable Joliet for long names)"));
    };

    let joliet_id = if joliet {
        if name.encode_utf16().count() > 64 || name.contains(['*', '/', ':', ';', '?', '\\']) {
            return Err(not_rep("not representable as a Joliet name"));
        }
        let mut id = ucs2(name);
        if !is_dir {
            id.extend_from_slice(&ucs2(";1"));
        }
        id
    } else {
        Vec::new()
    };
    Ok((primary, joliet_id))
}

fn ucs2(s: &str) -> Vec<u8> {
    s.encode_utf16().flat_map(u16::to_be_bytes).collect()
}

fn sectors_for(len: usize) -> usize {
    len.div_ceil(BLOCK)
}

fn write_at(image: &mut [u8], lba: u32, bytes: &[u8]) {
    let start = lba as usize * BLOCK;
    image[start..start + bytes.len()].copy_from_slice(bytes);
}

fn both_u32(v: u32) -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..4].copy_from_slice(&v.to_le_bytes());
    out[4..].copy_from_slice(&v.to_be_bytes());
    out
}

fn both_u16(v: u16) -> [u8; 4] {
    let mut out = [0u8; 4];
    out[..2].copy_from_slice(&v.to_le_bytes());
    out[2..].copy_from_slice(&v.to_be_bytes());
    out
}

fn dir_record(id: &[u8], lba: u32, size: u32, is_dir: bool) -> Vec<u8> {
    let len = 33 + id.len() + (id.len() + 1) % 2;
    let mut r = vec![0u8; len];
    r[0] = len as u8;
    r[2..10].copy_from_slice(&both_u32(lba));
    r[10..18].copy_from_slice(&both_u32(size));
    r[18..25].copy_from_slice(&RECORD_DATE);
    r[25] = if is_dir { 0x02 } else { 0 };
    r[28..32].copy_from_slice(&both_u16(1));
    r[32] = id.len() as u8;
    r[33..33 + id.len()].copy_from_slice(id);
    r
}

#[derive(Clone, Copy)]
enum Target {
    Dir(usize),
    File(usize),
}

/// Records of directory `d` in on-disc order: self, parent, then children
/// sorted by identifier.
fn records(dirs: &[Dir], files: &[File], d: usize, joliet: bool) -> Vec<(Vec<u8>, Target)> {
    let mut children: Vec<(Vec<u8>, Target)> = dirs[d]
        .children_dirs
        .iter()
        .map(|&c| (pick(&dirs[c].primary, &dirs[c].joliet, joliet).to_vec(), Target::Dir(c)))
        .chain(
            dirs[d]
                .files
                .iter()
                .map(|&f| (pick(&files[f].primary, &files[f].joliet, joliet).to_vec(), Target::File(f))),
        )
        .collect();
    children.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = vec![(vec![0], Target::Dir(d)), (vec![1], Target::Dir(dirs[d].parent))];
    out.extend(children);
    out
}

fn locate(dirs: &[Dir], files: &[File], target: Target, joliet: bool) -> (u32, u32, bool) {
    match target {
        Target::Dir(d) if joliet => (dirs[d].joliet_lba, dirs[d].joliet_size, true),
        Target::Dir(d) => (dirs[d].primary_lba, dirs[d].primary_size, true),
        Target::File(f) => (files[f].lba, files[f].data.len() as u32, false),
    }
}

fn directory_size(dirs: &[Dir], files: &[File], d: usize, joliet: bool) -> usize {
    let mut pos = 0usize;
    for (id, _) in records(dirs, files, d, joliet) {
        let len = 33 + id.len() + (id.len() + 1) % 2;
        if pos % BLOCK + len > BLOCK {
            pos = pos.div_ceil(BLOCK) * BLOCK;
        }
        pos += len;
    }
    pos.div_ceil(BLOCK).max(1) * BLOCK
}

fn directory_extent(dirs: &[Dir], files: &[File], d: usize, joliet: bool) -> Vec<u8> {
    let size = if joliet { dirs[d].joliet_size } else { dirs[d].primary_size } as usize;
    let mut out = vec![0u8; size];
    let mut pos = 0usize;
    for (id, target) in records(dirs, files, d, joliet) {
        let (lba, len, is_dir) = locate(dirs, files, target, joliet);
        let record = dir_record(&id, lba, len, is_dir);
        if pos % BLOCK + record.len() > BLOCK {
            pos = pos.div_ceil(BLOCK) * BLOCK;
        }
        out[pos..pos + record.len()].copy_from_slice(&record);
        pos += record.len();
    }
    out
}

/// Breadth-first directory order used for path tables and extent allocation.
fn path_table_order(dirs: &[Dir]) -> Vec<usize> {
    let mut order = vec![0usize];
    let mut i = 0;
    while i < order.len() {
        let mut kids = dirs[order[i]].children_dirs.clone();
        kids.sort_by(|a, b| dirs[*a].primary.cmp(&dirs[*b].primary));
        order.extend(kids);
        i += 1;
    }
    order
}

fn path_table_entries(dirs: &[Dir], order: &[usize], joliet: bool) -> Vec<(Vec<u8>, u32, u16)> {
    let number: BTreeMap<usize, u16> = order.iter().enumerate().map(|(i, &d)| (d, i as u16 + 1)).collect();
    order
        .iter()
        .map(|&d| {
            let id = if d == 0 { vec![0] } else { pick(&dirs[d].primary, &dirs[d].joliet, joliet).to_vec() };
            let lba = if joliet { dirs[d].joliet_lba } else { dirs[d].primary_lba };
            (id, lba, number[&dirs[d].parent])
        })
        .collect()
}

fn path_table(dirs: &[Dir], order: &[usize], joliet: bool) -> Vec<u8> {
    encode_path_table(path_table_entries(dirs, order, joliet), false)
}

fn path_table_big_endian(dirs: &[Dir], order: &[usize], joliet: bool) -> Vec<u8> {
    encode_path_table(path_table_entries(dirs, order, joliet), true)
}

fn encode_path_table(entries: Vec<(Vec<u8>, u32, u16)>, big_endian: bool) -> Vec<u8> {
    let mut out = Vec::new();
    for (id, lba, parent) in entries {
        out.push(id.len() as u8);
        out.push(0);
        if big_endian {
            out.extend_from_slice(&lba.to_be_bytes());
            out.extend_from_slice(&parent.to_be_bytes());
        } else {
            out.extend_from_slice(&lba.to_le_bytes());
            out.extend_from_slice(&parent.to_le_bytes());
        }
        out.extend_from_slice(&id);
        if id.len() % 2 == 1 {
            out.push(0);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn write_descriptor(
    d: &mut [u8],
    kind: u8,
    volume_id: &[u8],
    joliet: bool,
    volume_sectors: u32,
    path_table_size: u32,
    (l_table, m_table): (u32, u32),
    root_record: &[u8],
) {
    let pad: &[u8] = if joliet { &[0x00, 0x20] } else { &[0x20] };
    let fill = |field: &mut [u8], value: &[u8]| {
        for (i, b) in field.iter_mut().enumerate() {
            *b = pad[i % pad.len()];
        }
        field[..value.len()].copy_from_slice(value);
    };
    d[0] = kind;
    d[1..6].copy_from_slice(STANDARD_ID);
    d[6] = 1;
    fill(&mut d[8..40], b"");
    fill(&mut d[40..72], volume_id);
    d[80..88].copy_from_slice(&both_u32(volume_sectors));
    if joliet {
        d[88..91].copy_from_slice(b"%/E");
    }
    d[120..124].copy_from_slice(&both_u16(1));
    d[124..128].copy_from_slice(&both_u16(1));
    d[128..132].copy_from_slice(&both_u16(BLOCK as u16));
    d[132..140].copy_from_slice(&both_u32(path_table_size));
    d[140..144].copy_from_slice(&l_table.to_le_bytes());
    d[148..152].copy_from_slice(&m_table.to_be_bytes());
    d[156..156 + root_record.len()].copy_from_slice(root_record);
    for range in [190..318, 318..446, 446..574, 574..702, 702..739, 739..776, 776..813] {
        fill(&mut d[range], b"");
    }
    let application: Vec<u8> = if joliet { ucs2("CARRIERFORGE") } else { b"CARRIERFORGE".to_vec() };
    fill(&mut d[574..702], &application);
    for start in [813, 830] {
        d[start..start + 16].copy_from_slice(VOLUME_DATE);
        d[start + 16] = 0;
    }
    for start in [847, 864] {
        d[start..start + 16].copy_from_slice(b"0000000000000000");
        d[start + 16] = 0;
    }
    d[881] = 1;
}
