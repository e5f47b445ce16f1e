//! SHA-256 collection manifests, verification, normalization of foreign
//! manifests and BagIt packaging.
//!
//! The canonical manifest file is UTF-8, one `<digest> <path>` line per file,
//! LF terminated, sorted by path bytes, lowercase hex digests and forward
//! slash separators.

mod bag;
mod manifest;
mod normalize;

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use bag::{bag_pack, bag_verify, BAGIT_DECLARATION, BAG_MANIFEST_NAME};
pub use manifest::{
    manifest_create, manifest_verify, read_collection_manifest, verify_entries, write_collection_manifest, ChecksumManifest, ManifestEntry, Mismatch,
    VerificationReport, COLLECTION_MANIFEST_NAME,
};
pub use normalize::{
    manifest_normalize, DeclaredConventions, ManifestEncoding, NormalizationLog, Transform,
    TransformKind,
};

#[derive(Debug, Error)]
pub enum FixityError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("path {0} cannot be represented in a manifest (non UTF-8 or control characters)")]
    UnrepresentablePath(PathBuf),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate manifest path {path:?} (line {line})")]
    DuplicatePath { line: usize, path: String },
    #[error("not a bag: {0}")]
    NotABag(String),
    #[error("bag destination {0} is not empty")]
    DestinationNotEmpty(PathBuf),
}

impl FixityError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> FixityError {
        let path = path.to_path_buf();
        move |source| FixityError::Io { path, source }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_digest_matches_coreutils() {
        // Frozen from `printf hello | sha256sum`.
        assert_eq!(
            sha256_hex(b"hello"),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }

    #[test]
    fn hex_shape() {
        assert!(is_sha256_hex(&sha256_hex(b"")));
        assert!(!is_sha256_hex(&sha256_hex(b"").to_uppercase()));
        assert!(!is_sha256_hex("abc"));
    }
}
