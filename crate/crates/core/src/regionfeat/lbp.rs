//! Uniform local binary patterns (P = 8, R = 1): 58 uniform codes plus one
//! shared bin for all other codes.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage};

pub const LBP_BINS: usize = 59;

/// Neighbour offsets, counter-clockwise from east; bit `i` is neighbour `i`.
const NEIGHBOURS: [(isize, isize); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// Number of 0/1 changes around the circular 8-bit code.
pub fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Bin of each of the 256 codes: uniform codes in ascending order take bins
/// 0..58, every other code maps to bin 58.
pub fn uniform_bins() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [58u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, 58);
        table
    })
}

/// LBP code of pixel `(x, y)`; the caller guarantees all neighbours exist.
#[inline]
pub fn lbp_code(gray: &GrayImage, x: usize, y: usize) -> u8 {
    let c = gray.get(x, y);
    let mut code = 0u8;
    for (bit, &(dx, dy)) in NEIGHBOURS.iter().enumerate() {
        let v = gray.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if v >= c {
            code |= 1 << bit;
        }
    }
    code
}

/// Normalized 59-bin uniform LBP histogram over masked pixels whose eight
/// neighbours all lie inside the image.
pub fn rilbp_features(gray: &GrayImage, mask: &BinaryMask) -> Result<[f64; LBP_BINS]> {
    let bins = uniform_bins();
    let mut hist = [0u64; LBP_BINS];
    let mut total = 0u64;
    for y in 1..gray.height.saturating_sub(1) {
        for x in 1..gray.width.saturating_sub(1) {
            if mask.get(x, y) {
                hist[bins[lbp_code(gray, x, y) as usize] as usize] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::DegenerateTexture("no interior masked pixel for LBP"));
    }
    Ok(hist.map(|c| c as f64 / total as f64))
}
