//! Otsu threshold selection on a 256-bin histogram.

use crate::error::{Error, Result};

use super::Raster2D;

/// Threshold maximizing the between-class variance of the 256-bin
/// histogram. The two classes are {intensity ≤ t} and {intensity > t};
/// ties resolve to the smallest t. Errs with `DegenerateHistogram` when
/// every pixel shares one intensity.
pub fn otsu_threshold(gray: &Raster2D<u8>) -> Result<u8> {
    if gray.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: gray.channels(),
        });
    }
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let occupied = hist.iter().filter(|&&n| n > 0).count();
    if occupied <= 1 {
        let intensity = hist.iter().position(|&n| n > 0).unwrap_or(0) as u8;
        return Err(Error::DegenerateHistogram(intensity));
    }

    let total: u64 = hist.iter().sum();
    let total_weighted: u64 = hist
        .iter()
        .enumerate()
        .map(|(i, &n)| i as u64 * n)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut count_low = 0u64;
    let mut sum_low = 0u64;
    for t in 0..=255usize {
        count_low += hist[t];
        sum_low += t as u64 * hist[t];
        let count_high = total - count_low;
        if count_low == 0 || count_high == 0 {
            continue;
        }
        let w0 = count_low as f64 / total as f64;
        let w1 = count_high as f64 / total as f64;
        let mu0 = sum_low as f64 / count_low as f64;
        let mu1 = (total_weighted - sum_low) as f64 / count_high as f64;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}
