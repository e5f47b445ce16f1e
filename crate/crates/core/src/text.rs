//! Text decoding shared by the cue and manifest readers.

/// Decodes `bytes` as UTF-8, falling back to Latin-1 when the input is not
/// valid UTF-8. The flag is `true` when the fallback was taken.
pub fn decode_utf8_or_latin1(bytes: &[u8]) -> (String, bool) {
    match std::str::from_utf8(bytes) {
        Ok(s) => (s.strip_prefix('\u{feff}').unwrap_or(s).to_owned(), false),
        Err(_) => (bytes.iter().map(|&b| char::from(b)).collect(), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utf8_passes_through() {
        assert_eq!(decode_utf8_or_latin1("café".as_bytes()), ("café".to_owned(), false));
    }

    #[test]
    fn bom_is_dropped() {
        assert_eq!(decode_utf8_or_latin1(b"\xef\xbb\xbfTRACK").0, "TRACK");
    }

    #[test]
    fn latin1_fallback() {
        assert_eq!(decode_utf8_or_latin1(b"caf\xe9"), ("café".to_owned(), true));
    }
}
