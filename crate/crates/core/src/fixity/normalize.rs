use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::manifest::{ChecksumManifest, ManifestEntry};
use super::FixityError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifestEncoding {
    /// UTF-8, falling back to Latin-1 when the bytes are not valid UTF-8.
    #[default]
    Auto,
    Utf8,
    Latin1,
}

/// What the producer of a foreign manifest is known (or assumed) to have used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredConventions {
    pub encoding: ManifestEncoding,
    /// Treat `\` in paths as a directory separator.
    pub backslash_separators: bool,
}

impl Default for DeclaredConventions {
    fn default() -> Self {
        DeclaredConventions {
            encoding: ManifestEncoding::Auto,
            backslash_separators: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    DecodedLatin1,
    StrippedByteOrderMark,
    StrippedCarriageReturn,
    SkippedBlankLine,
    SkippedComment,
    ConvertedBsdTag,
    LowercasedDigest,
    StrippedBinaryMarker,
    StrippedTextModeMarker,
    ConvertedBackslashes,
    StrippedDotSlash,
    Reordered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transform {
    /// 1-based source line, absent for whole-file transforms.
    pub line: Option<usize>,
    pub kind: TransformKind,
}

pub type NormalizationLog = Vec<Transform>;

/// Converts a foreign `digest path` manifest into the canonical form.
///
/// Accepted per line: GNU coreutils output (text-mode double space or
/// binary-mode `*`), BSD `SHA256 (path) = digest` tags, upper-case hex,
/// backslash separators, `./` prefixes and CRLF endings. Every change made is
/// logged; canonical input yields an empty log.
pub fn manifest_normalize(
    raw: &[u8],
    conventions: DeclaredConventions,
) -> Result<(ChecksumManifest, NormalizationLog), FixityError> {
    let mut log = Vec::new();
    let mut text = match conventions.encoding {
        ManifestEncoding::Utf8 => std::str::from_utf8(raw)
            .map_err(|e| FixityError::Parse {
                line: raw[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1,
                message: "invalid UTF-8".into(),
            })?
            .to_owned(),
        ManifestEncoding::Latin1 => latin1(raw),
        ManifestEncoding::Auto => match std::str::from_utf8(raw) {
            Ok(s) => s.to_owned(),
            Err(_) => {
                log.push(Transform { line: None, kind: TransformKind::DecodedLatin1 });
                latin1(raw)
            }
        },
    };
    if let Some(rest) = text.strip_prefix('\u{feff}') {
        text = rest.to_owned();
        log.push(Transform { line: None, kind: TransformKind::StrippedByteOrderMark });
    }

    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw_line) in text.split_terminator('\n').enumerate() {
        let line_no = idx + 1;
        let mut note = |kind| log.push(Transform { line: Some(line_no), kind });
        let line = match raw_line.strip_suffix('\r') {
            Some(l) => {
                note(TransformKind::StrippedCarriageReturn);
                l
            }
            None => raw_line,
        };
        if line.trim().is_empty() {
            note(TransformKind::SkippedBlankLine);
            continue;
        }
        if line.starts_with('#') {
            note(TransformKind::SkippedComment);
            continue;
        }

        let (digest, mut path) = match parse_bsd_tag(line) {
            Some((path, digest)) => {
                note(TransformKind::ConvertedBsdTag);
                (digest.to_owned(), path.to_owned())
            }
            None => {
                let digest = line.get(..64).filter(|d| d.bytes().all(|b| b.is_ascii_hexdigit()));
                let rest = line.get(64..).and_then(|r| r.strip_prefix([' ', '\t']));
                let (Some(digest), Some(rest)) = (digest, rest) else {
                    return Err(FixityError::Parse {
                        line: line_no,
                        message: "no recognizable 64-hex SHA-256 digest".into(),
                    });
                };
                let rest = if let Some(r) = rest.strip_prefix('*') {
                    note(TransformKind::StrippedBinaryMarker);
                    r
                } else if let Some(r) = rest.strip_prefix(' ') {
                    note(TransformKind::StrippedTextModeMarker);
                    r
                } else {
                    rest
                };
                (digest.to_owned(), rest.to_owned())
            }
        };

        let digest = if digest.bytes().any(|b| b.is_ascii_uppercase()) {
            note(TransformKind::LowercasedDigest);
            digest.to_ascii_lowercase()
        } else {
            digest
        };
        if conventions.backslash_separators && path.contains('\\') {
            note(TransformKind::ConvertedBackslashes);
            path = path.replace('\\', "/");
        }
        if let Some(rest) = path.strip_prefix("./") {
            note(TransformKind::StrippedDotSlash);
            path = rest.to_owned();
        }
        if path.is_empty()
            || path.starts_with('/')
            || path.split('/').any(|part| part.is_empty() || part == "..")
        {
            return Err(FixityError::Parse {
                line: line_no,
                message: format!("path {path:?} is not a relative file path"),
            });
        }
        if !seen.insert(path.clone()) {
            return Err(FixityError::DuplicatePath { line: line_no, path });
        }
        entries.push(ManifestEntry { path, digest });
    }

    let sorted = entries
        .windows(2)
        .all(|w| w[0].path.as_bytes() < w[1].path.as_bytes());
    if !sorted {
        log.push(Transform { line: None, kind: TransformKind::Reordered });
    }
    let manifest = ChecksumManifest::from_entries("", entries)?;
    Ok((manifest, log))
}

fn latin1(raw: &[u8]) -> String {
    raw.iter().map(|&b| char::from(b)).collect()
}

/// `SHA256 (path) = digest`
fn parse_bsd_tag(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix("SHA256 (")?;
    let (path, digest) = rest.rsplit_once(") = ")?;
    (digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit())).then_some((path, digest))
}
