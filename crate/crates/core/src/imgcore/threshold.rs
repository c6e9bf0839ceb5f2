use super::GrayImage;
use crate::error::{Error, Result};

/// 256-bin intensity histogram.
pub fn histogram(values: impl IntoIterator<Item = u8>) -> [u64; 256] {
    let mut h = [0u64; 256];
    for v in values {
        h[v as usize] += 1;
    }
    h
}

/// Otsu threshold of a gray image. Pixels `<= t` form the low class.
pub fn otsu_threshold(gray: &GrayImage) -> Result<u8> {
    otsu_from_histogram(&histogram(gray.data.iter().copied()))
}

/// Otsu threshold from a 256-bin histogram.
///
/// Between-class variance is compared exactly as a rational number, so ties
/// (for example across empty bins) always resolve to the smallest threshold.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::NoVariance);
    }
    let total: u64 = hist.iter().sum();
    let sum: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * u128::from(c)).sum();
    // (N*s0)^2 must fit in u128.
    let exact = total < (1 << 28);

    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best_t = 0u8;
    let mut best: Option<Score> = None;
    for t in 0..=255usize {
        n0 += hist[t];
        s0 += t as u128 * u128::from(hist[t]);
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let score = if exact {
            let a = u128::from(total) * s0;
            let b = u128::from(n0) * sum;
            let diff = a.abs_diff(b);
            Score::Exact {
                num: diff * diff,
                den: n0 * n1,
            }
        } else {
            let w0 = n0 as f64 / total as f64;
            let w1 = 1.0 - w0;
            let mu0 = s0 as f64 / n0 as f64;
            let mu1 = (sum - s0) as f64 / n1 as f64;
            Score::Approx(w0 * w1 * (mu0 - mu1) * (mu0 - mu1))
        };
        if best.as_ref().is_none_or(|b| score.greater_than(b)) {
            best = Some(score);
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

enum Score {
    Exact { num: u128, den: u64 },
    Approx(f64),
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        match (self, other) {
            (Score::Exact { num: a, den: da }, Score::Exact { num: b, den: db }) => {
                mul_wide(*a, *db) > mul_wide(*b, *da)
            }
            (Score::Approx(a), Score::Approx(b)) => a > b,
            _ => unreachable!("scores of one histogram share a representation"),
        }
    }
}

/// `a * b` as a (high, low) pair of a 192-bit integer.
fn mul_wide(a: u128, b: u64) -> (u128, u64) {
    let lo = (a as u64 as u128) * u128::from(b);
    let hi = (a >> 64) * u128::from(b);
    (hi + (lo >> 64), lo as u64)
}
