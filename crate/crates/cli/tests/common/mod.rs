#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carrierforge_core::fixity::sha256_hex;
use carrierforge_core::forge::Artifact;

pub const BIN: &str = env!("CARGO_BIN_EXE_carrierforge");

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

/// Runs the binary in `cwd` with CARRIERFORGE_LEDGER cleared.
pub fn run(cwd: &Path, args: &[&str]) -> Run {
    let out: Output = Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("CARRIERFORGE_LEDGER")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Digest of every file under `root`, by relative path.
pub fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if !root.exists() {
        return out;
    }
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
        if entry.file_type().is_file() {
            out.insert(rel, sha256_hex(&fs::read(entry.path()).unwrap()));
        } else {
            out.insert(rel + "/", String::new());
        }
    }
    out
}

/// Writes an artifact as `<dir>/<name>/<image>` (+ cue) and returns the
/// batch CSV row.
pub fn write_artifact(dir: &Path, carrier_id: &str, a: &Artifact) -> String {
    let sub = dir.join(carrier_id);
    fs::create_dir_all(&sub).unwrap();
    fs::write(sub.join(&a.truth.image_name), &a.image).unwrap();
    let cue = match (&a.cue, &a.truth.cue_name) {
        (Some(text), Some(name)) => {
            fs::write(sub.join(name), text).unwrap();
            format!("{carrier_id}/{name}")
        }
        _ => String::new(),
    };
    format!("{carrier_id},{carrier_id}/{},{cue}\n", a.truth.image_name)
}

pub fn write_batch(dir: &Path, name: &str, rows: &[String]) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("carrier_id,image_path,cue_path\n{}", rows.concat())).unwrap();
    path
}

/// LBA of the root directory extent of an ISO image.
pub fn root_dir_lba(image: &[u8]) -> usize {
    let pvd = 16 * 2048;
    u32::from_le_bytes(image[pvd + 158..pvd + 162].try_into().unwrap()) as usize
}
