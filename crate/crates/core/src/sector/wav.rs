/// Size of the canonical RIFF/WAVE header written by [`wrap_wav`].
pub const WAV_HEADER_LEN: usize = 44;

const CHANNELS: u16 = 2;
const SAMPLE_RATE: u32 = 44_100;
const BITS_PER_SAMPLE: u16 = 16;
const BLOCK_ALIGN: u16 = CHANNELS * BITS_PER_SAMPLE / 8;
const BYTE_RATE: u32 = SAMPLE_RATE * BLOCK_ALIGN as u32;
const FORMAT_PCM: u16 = 1;

/// True when `bytes` starts with a RIFF header whose form type is WAVE.
pub fn detect_riff(bytes: &[u8]) -> bool {
    bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WAVE"
}

/// Total length in bytes a RIFF file declares for itself (chunk size + 8), if
/// `bytes` carries a RIFF/WAVE header.
pub fn riff_declared_len(bytes: &[u8]) -> Option<usize> {
    if !detect_riff(bytes) {
        return None;
    }
    let size = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    Some(size as usize + 8)
}

/// Prepends a 44-byte CD-DA header (PCM, stereo, 44.1 kHz, 16-bit) to `pcm`.
///
/// An odd-length payload gets one zero pad byte after the data chunk. The pad
/// is excluded from the data chunk size but counted in the RIFF size.
pub fn wrap_wav(pcm: &[u8]) -> Vec<u8> {
    let pad = pcm.len() % 2;
    let data_len = pcm.len() as u32;
    let riff_len = 36 + data_len + pad as u32;

    let mut out = Vec::with_capacity(WAV_HEADER_LEN + pcm.len() + pad);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&BYTE_RATE.to_le_bytes());
    out.extend_from_slice(&BLOCK_ALIGN.to_le_bytes());
    out.extend_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(pcm);
    if pad == 1 {
        out.push(0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn riff_detection() {
        let mut b = b"RIFF\x01\x02\x03\x04WAVEpayload".to_vec();
        assert!(detect_riff(&b));
        b[9] = b'X';
        assert!(!detect_riff(&b));
        assert!(!detect_riff(&[0u8; 12]));
        assert!(!detect_riff(b"RIFF\0\0\0\0"));
        assert!(!detect_riff(b""));
    }

    #[test]
    fn empty_pcm_gives_bare_header() {
        let wav = wrap_wav(&[]);
        assert_eq!(wav.len(), 44);
        assert_eq!(&wav[40..44], &0u32.to_le_bytes());
        assert_eq!(&wav[4..8], &36u32.to_le_bytes());
    }

    #[test]
    fn one_sector_of_pcm() {
        let wav = wrap_wav(&[7u8; 2352]);
        assert_eq!(wav.len(), 2396);
        assert_eq!(&wav[4..8], &(2352u32 + 36).to_le_bytes());
        assert_eq!(&wav[22..24], &2u16.to_le_bytes());
        assert_eq!(&wav[24..28], &44_100u32.to_le_bytes());
        assert_eq!(&wav[28..32], &176_400u32.to_le_bytes());
        assert_eq!(&wav[32..34], &4u16.to_le_bytes());
        assert_eq!(&wav[34..36], &16u16.to_le_bytes());
    }

    #[test]
    fn odd_payload_is_padded_outside_data_chunk() {
        let wav = wrap_wav(&[1, 2, 3]);
        assert_eq!(wav.len(), 44 + 4);
        assert_eq!(&wav[40..44], &3u32.to_le_bytes());
        assert_eq!(wav[47], 0);
        assert_eq!(riff_declared_len(&wav), Some(48));
    }

    #[test]
    fn independent_reader_sees_every_sample() {
        let pcm: Vec<u8> = (0..4 * 2352u32).map(|i| (i * 31) as u8).collect();
        let wav = wrap_wav(&pcm);
        let reader = hound::WavReader::new(std::io::Cursor::new(&wav)).unwrap();
        let spec = reader.spec();
        assert_eq!(spec.channels, 2);
        assert_eq!(spec.sample_rate, 44_100);
        assert_eq!(spec.bits_per_sample, 16);
        assert_eq!(spec.sample_format, hound::SampleFormat::Int);
        assert_eq!(reader.len() as usize, pcm.len() / 2);
        let samples: Vec<i16> = reader.into_samples::<i16>().map(Result::unwrap).collect();
        let expected: Vec<i16> = pcm
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(samples, expected);
    }

    proptest! {
        #[test]
        fn wrapped_output_is_always_riff(pcm in proptest::collection::vec(any::<u8>(), 0..3000)) {
            let wav = wrap_wav(&pcm);
            prop_assert!(detect_riff(&wav));
            prop_assert_eq!(&wav[44..44 + pcm.len()], &pcm[..]);
            prop_assert_eq!(riff_declared_len(&wav), Some(wav.len()));
        }

        #[test]
        fn hound_agrees_on_sample_count(frames in 0usize..2000) {
            let pcm = vec![0x11u8; frames * 4];
            let wav = wrap_wav(&pcm);
            let reader = hound::WavReader::new(std::io::Cursor::new(wav)).unwrap();
            prop_assert_eq!(reader.len() as usize, frames * 2);
        }
    }
}
