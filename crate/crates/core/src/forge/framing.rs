use crate::sector::{
    sector_address_bcd, SectorMode, DATA_SECTOR_SIZE, RAW_SECTOR_SIZE, SECTOR_HEADER_LEN, SYNC_PATTERN,
};

/// CRC-32 used for the sector EDC field (polynomial 0x8001801B, reflected).
fn edc(bytes: &[u8]) -> u32 {
    let mut crc = 0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xD801_8001 } else { crc >> 1 };
        }
    }
    crc
}

/// Frames `user` (a whole number of user-data sectors) into raw sectors
/// starting at absolute sector `first_lba`. ECC parity is left zeroed.
pub(crate) fn frame(mode: SectorMode, user: &[u8], first_lba: u64) -> Vec<u8> {
    let unit = mode.user_data_size();
    debug_assert_eq!(user.len() % unit, 0);
    if matches!(mode, SectorMode::Audio2352 | SectorMode::Mode1_2048) {
        return user.to_vec();
    }
    let mut out = Vec::with_capacity(user.len() / unit * RAW_SECTOR_SIZE);
    for (i, chunk) in user.chunks_exact(unit).enumerate() {
        let mut sector = [0u8; RAW_SECTOR_SIZE];
        sector[..12].copy_from_slice(&SYNC_PATTERN);
        sector[12..15].copy_from_slice(&sector_address_bcd(first_lba + i as u64));
        match mode {
            SectorMode::Mode1_2352 => {
                sector[15] = 1;
                sector[16..16 + DATA_SECTOR_SIZE].copy_from_slice(chunk);
                let crc = edc(&sector[..16 + DATA_SECTOR_SIZE]);
                sector[2064..2068].copy_from_slice(&crc.to_le_bytes());
            }
            SectorMode::Mode2_2352 => {
                sector[15] = 2;
                sector[SECTOR_HEADER_LEN..].copy_from_slice(chunk);
            }
            SectorMode::Mode2Form1_2352 => {
                sector[15] = 2;
                let subheader = [0, 0, 0x08, 0];
                sector[16..20].copy_from_slice(&subheader);
                sector[20..24].copy_from_slice(&subheader);
                sector[24..24 + DATA_SECTOR_SIZE].copy_from_slice(chunk);
                let crc = edc(&sector[16..24 + DATA_SECTOR_SIZE]);
                sector[2072..2076].copy_from_slice(&crc.to_le_bytes());
            }
            SectorMode::Audio2352 | SectorMode::Mode1_2048 => unreachable!(),
        }
        out.extend_from_slice(&sector);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edc_check_value() {
        // CRC catalogue check input "123456789" for this reflected polynomial.
        assert_eq!(edc(b"123456789"), 0x6EC2_EDC4);
    }

    #[test]
    fn frame_then_deframe_every_mode() {
        for mode in SectorMode::ALL {
            let unit = mode.user_data_size();
            let user: Vec<u8> = (0..3 * unit).map(|i| (i % 251) as u8).collect();
            let raw = frame(mode, &user, 0);
            assert_eq!(raw.len(), 3 * mode.raw_size());
            let back: Vec<u8> = raw
                .chunks_exact(mode.raw_size())
                .flat_map(|s| mode.deframe(s).to_vec())
                .collect();
            assert_eq!(back, user, "{mode:?}");
        }
    }
}
