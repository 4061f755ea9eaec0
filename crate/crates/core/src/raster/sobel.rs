//! 3x3 Sobel gradient filtering with replicate border padding.

use crate::error::{Error, Result};

use super::Raster2D;

/// Gradient direction. `Horizontal` responds to changes along columns,
/// `Vertical` to changes along rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientAxis {
    Horizontal,
    Vertical,
}

/// Kernel weight at offset (dr, dc). The horizontal kernel is
/// [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]; the vertical kernel is its
/// transpose.
#[inline]
fn weight(axis: GradientAxis, dr: i32, dc: i32) -> f64 {
    let smooth = |d: i32| match d {
        0 => 2.0,
        _ => 1.0,
    };
    match axis {
        GradientAxis::Horizontal => dc as f64 * smooth(dr),
        GradientAxis::Vertical => dr as f64 * smooth(dc),
    }
}

fn check(image: &Raster2D<f64>) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: image.channels(),
        });
    }
    let (h, w) = image.extent();
    if h < 3 || w < 3 {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
        });
    }
    Ok(())
}

/// Correlates the image with the unnormalized 3x3 Sobel kernel, replicating
/// the border (out-of-range samples clamp to the nearest edge pixel).
pub fn sobel(image: &Raster2D<f64>, axis: GradientAxis) -> Result<Raster2D<f64>> {
    check(image)?;
    let (h, w) = image.extent();
    let mut out = Raster2D::filled(h, w, 1, 0.0)?;
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let wgt = weight(axis, dr, dc);
                    if wgt == 0.0 {
                        continue;
                    }
                    let sr = (r as i64 + dr as i64).clamp(0, h as i64 - 1) as usize;
                    let sc = (c as i64 + dc as i64).clamp(0, w as i64 - 1) as usize;
                    acc += wgt * image.get(0, sr, sc);
                }
            }
            out.set(0, r, c, acc);
        }
    }
    Ok(out)
}

/// Adjoint of [`sobel`]: given upstream sensitivities with respect to the
/// filter output, scatters them back onto the input pixels, accounting for
/// the replicate padding. Used for analytic loss gradients.
pub(crate) fn sobel_adjoint(upstream: &Raster2D<f64>, axis: GradientAxis) -> Raster2D<f64> {
    let (h, w) = upstream.extent();
    let mut out = Raster2D::filled(h, w, 1, 0.0).expect("extent is valid");
    for r in 0..h {
        for c in 0..w {
            let u = upstream.get(0, r, c);
            if u == 0.0 {
                continue;
            }
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let wgt = weight(axis, dr, dc);
                    if wgt == 0.0 {
                        continue;
                    }
                    let sr = (r as i64 + dr as i64).clamp(0, h as i64 - 1) as usize;
                    let sc = (c as i64 + dc as i64).clamp(0, w as i64 - 1) as usize;
                    let prev = out.get(0, sr, sc);
                    out.set(0, sr, sc, prev + wgt * u);
                }
            }
        }
    }
    out
}
