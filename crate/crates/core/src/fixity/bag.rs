use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::manifest::{list_files, verify_entries, ChecksumManifest, ManifestEntry};
use super::{sha256_file, FixityError, VerificationReport};

pub const BAG_MANIFEST_NAME: &str = "manifest-sha256.txt";
pub const BAGIT_DECLARATION: &str = "BagIt-Version: 0.97\nTag-File-Character-Encoding: UTF-8\n";

/// Copies `root` into a new bag at `bag_destination` (`bagit.txt`,
/// `manifest-sha256.txt`, `data/`). On failure the partial bag is removed.
pub fn bag_pack(root: &Path, bag_destination: &Path) -> Result<PathBuf, FixityError> {
    if !root.is_dir() {
        return Err(FixityError::Io {
            path: root.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "payload root is not a directory"),
        });
    }
    let pre_existing = bag_destination.exists();
    if pre_existing {
        let mut contents = fs::read_dir(bag_destination).map_err(FixityError::io(bag_destination))?;
        if contents.next().is_some() {
            return Err(FixityError::DestinationNotEmpty(bag_destination.to_path_buf()));
        }
    }
    match build_bag(root, bag_destination) {
        Ok(()) => Ok(bag_destination.to_path_buf()),
        Err(e) => {
            if pre_existing {
                if let Ok(items) = fs::read_dir(bag_destination) {
                    for item in items.flatten() {
                        let p = item.path();
                        let _ = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
                    }
                }
            } else {
                let _ = fs::remove_dir_all(bag_destination);
            }
            Err(e)
        }
    }
}

fn build_bag(root: &Path, dest: &Path) -> Result<(), FixityError> {
    let data = dest.join("data");
    fs::create_dir_all(&data).map_err(FixityError::io(&data))?;

    // Every regular file in the payload, including a collection manifest.
    let mut files = list_files(root, root)?;
    let top_manifest = root.join(super::COLLECTION_MANIFEST_NAME);
    if top_manifest.is_file() {
        files.push((super::COLLECTION_MANIFEST_NAME.to_owned(), top_manifest));
    }

    let mut entries = Vec::with_capacity(files.len());
    for (rel, source) in files {
        let target = data.join(&rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(FixityError::io(parent))?;
        }
        fs::copy(&source, &target).map_err(FixityError::io(&source))?;
        let digest = sha256_file(&target).map_err(FixityError::io(&target))?;
        entries.push(ManifestEntry {
            path: format!("data/{rel}"),
            digest,
        });
    }
    let manifest = ChecksumManifest::from_entries(dest.display().to_string(), entries)?;

    let manifest_path = dest.join(BAG_MANIFEST_NAME);
    fs::write(&manifest_path, manifest.to_text()).map_err(FixityError::io(&manifest_path))?;
    let declaration = dest.join("bagit.txt");
    fs::write(&declaration, BAGIT_DECLARATION).map_err(FixityError::io(&declaration))?;
    Ok(())
}

/// Validates a bag's declaration and re-verifies its payload manifest.
pub fn bag_verify(bag: &Path) -> Result<VerificationReport, FixityError> {
    let declaration = fs::read_to_string(bag.join("bagit.txt"))
        .map_err(|e| FixityError::NotABag(format!("bagit.txt: {e}")))?;
    if !declaration.lines().any(|l| l.starts_with("BagIt-Version:")) {
        return Err(FixityError::NotABag("bagit.txt lacks BagIt-Version".into()));
    }
    let manifest_text = fs::read_to_string(bag.join(BAG_MANIFEST_NAME))
        .map_err(|e| FixityError::NotABag(format!("{BAG_MANIFEST_NAME}: {e}")))?;
    let manifest = ChecksumManifest::from_text(bag.display().to_string(), &manifest_text)?;
    if let Some(e) = manifest.entries.iter().find(|e| !e.path.starts_with("data/")) {
        return Err(FixityError::NotABag(format!("manifest path {:?} outside data/", e.path)));
    }
    let data = bag.join("data");
    if !data.is_dir() {
        return Err(FixityError::NotABag("missing data/ directory".into()));
    }
    Ok(verify_entries(&manifest.entries, bag, &data))
}
