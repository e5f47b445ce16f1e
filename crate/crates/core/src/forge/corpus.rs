//! The standard fixture corpus: a fixed list of forge specs covering every
//! carrier class, boundary file sizes and 1 to 5 track layouts.
//!
//! The corpus is checked in as `fixtures/corpus.json`; [`standard_corpus`]
//! regenerates it and a test keeps the two in sync.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FileContent, ForgeSpec, TrackSpec, TreeNode};
use crate::classify::CarrierClass;
use crate::sector::SectorMode;

pub const CORPUS_JSON: &str = include_str!("../../fixtures/corpus.json");

/// File sizes every data kind cycles through.
pub const BOUNDARY_SIZES: [usize; 5] = [0, 1, 2047, 2048, 2049];

const SPECS_PER_KIND: usize = 24;
const GENERATOR_SEED: u64 = 0x5EED_C0DE;

/// Parses the checked-in corpus.
pub fn corpus() -> Vec<ForgeSpec> {
    serde_json::from_str(CORPUS_JSON).expect("fixtures/corpus.json is valid")
}

pub fn standard_corpus() -> Vec<ForgeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(GENERATOR_SEED);
    let mut specs = Vec::new();
    for i in 0..SPECS_PER_KIND {
        for kind in CarrierClass::ALL {
            let seed = rng.gen::<u32>() as u64;
            let mut spec = ForgeSpec::new(kind, seed);
            spec.name = format!("{}-{i:02}", kind.name().to_ascii_lowercase());
            spec.volume_id = format!("EAP{:03}", specs.len());
            match kind {
                CarrierClass::IsoDataDisk | CarrierClass::UdfDataDisk => {
                    spec.joliet = i % 3 == 2;
                    spec.tree = Some(tree(&mut rng, i, spec.joliet));
                }
                CarrierClass::DvdVideo => {
                    if i % 2 == 1 {
                        spec.tree = Some(tree(&mut rng, i, false));
                    }
                }
                CarrierClass::HfsPlus => spec.hfsx = i % 4 == 3,
                CarrierClass::RedBookAudio => spec.tracks = Some(audio_tracks(&mut rng, i, false)),
                CarrierClass::MalformedAudioWav => spec.tracks = Some(audio_tracks(&mut rng, i, true)),
                CarrierClass::MixedMode => {
                    spec.joliet = i % 4 == 1;
                    spec.tree = Some(tree(&mut rng, i, spec.joliet));
                    spec.tracks = Some(mixed_tracks(&mut rng, i));
                }
                CarrierClass::MdsOpaque | CarrierClass::Unknown => {}
            }
            specs.push(spec);
        }
    }
    specs
}

fn tree(rng: &mut ChaCha8Rng, i: usize, joliet: bool) -> Vec<TreeNode> {
    let mut nodes = Vec::new();
    // Each boundary size appears at least once per kind.
    nodes.push(TreeNode::random(&format!("B{:02}.BIN", i), BOUNDARY_SIZES[i % BOUNDARY_SIZES.len()]));
    for n in 0..rng.gen_range(0..4) {
        let size = *[0usize, 1, 17, 2047, 2048, 2049, 4095, 6000, 20000].choose(rng).unwrap();
        let path = match n {
            0 => format!("DATA/F{n}.DAT"),
            1 => format!("DATA/SUB/F{n}.TIF"),
            _ => format!("F{n}"),
        };
        nodes.push(TreeNode::random(&path, size));
    }
    if i % 5 == 0 {
        nodes.push(TreeNode::text("README.TXT", "Deposited carrier.\n"));
    }
    if i % 6 == 1 {
        nodes.push(TreeNode::dir("EMPTY"));
    }
    if joliet {
        nodes.push(TreeNode::random("Long Name Report (final).pdf", rng.gen_range(0..3000)));
        nodes.push(TreeNode {
            path: "Scans 2014/Böhm, page 1.tif".into(),
            content: FileContent::Random(rng.gen_range(1..5000)),
        });
    }
    nodes
}

fn audio_tracks(rng: &mut ChaCha8Rng, i: usize, wrapped: bool) -> Vec<TrackSpec> {
    let count = i % 5 + 1;
    (0..count)
        .map(|t| {
            let mut track = TrackSpec::audio(rng.gen_range(1..8));
            if wrapped {
                // Occasionally leave one later track raw; per-track handling applies.
                if t > 0 && i % 7 == 3 {
                    track.wav_wrapped = Some(false);
                }
            } else if rng.gen_bool(0.3) {
                track.pregap_sectors = rng.gen_range(1..3);
            }
            track
        })
        .collect()
}

fn mixed_tracks(rng: &mut ChaCha8Rng, i: usize) -> Vec<TrackSpec> {
    let count = i % 4 + 2;
    let data_mode = if i % 3 == 2 {
        SectorMode::Mode2_2352
    } else {
        SectorMode::Mode1_2352
    };
    // Leading data track (enhanced CD) or trailing one.
    let data_at = if i % 2 == 0 { 0 } else { count - 1 };
    (0..count)
        .map(|t| {
            if t == data_at {
                TrackSpec::data(data_mode)
            } else {
                let mut track = TrackSpec::audio(rng.gen_range(1..6));
                if t > 0 && rng.gen_bool(0.25) {
                    track.pregap_sectors = 1;
                }
                track
            }
        })
        .collect()
}
