//! Slide-scale tissue masking and patch selection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{otsu_threshold, remove_small, BinaryMask, Raster2D, RemoveMode};

/// One selected patch of the non-overlapping grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TileSpec {
    /// Top-left pixel (row, col), aligned to the patch grid.
    pub origin: (usize, usize),
    pub size: usize,
    /// Mean of the binary tissue mask over the tile.
    pub tissue_fraction: f64,
    pub has_epithelium: bool,
}

/// Patch selection thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileParams {
    pub patch: usize,
    /// Minimum tissue fraction for a tile to qualify.
    pub min_tissue: f64,
    /// Minimum number of intra-epithelial pixels for a tile to qualify.
    pub min_epithelium_px: usize,
}

impl Default for TileParams {
    fn default() -> Self {
        Self {
            patch: 256,
            min_tissue: 0.1,
            min_epithelium_px: 1,
        }
    }
}

/// Default cleanup areas for slide-scale tissue masks.
pub const DEFAULT_TISSUE_MIN_OBJECT: usize = 4096;
pub const DEFAULT_TISSUE_MIN_HOLE: usize = 4096;

/// Binary tissue mask of an RGB slide.
///
/// Grayscale is ITU-R BT.601 luma, rounded. On H&E slides the background
/// is near-white, so tissue is the dark side of the Otsu split
/// (luma ≤ threshold). Small objects and then small holes below the given
/// areas are removed. A degenerate (single-intensity) image yields an
/// empty mask.
pub fn tissue_mask(rgb: &Raster2D<u8>, min_object: usize, min_hole: usize) -> Result<BinaryMask> {
    if rgb.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: rgb.channels(),
        });
    }
    let (h, w) = rgb.extent();
    let mut luma = Raster2D::filled(h, w, 1, 0u8)?;
    for r in 0..h {
        for c in 0..w {
            let v = 0.299 * rgb.get(0, r, c) as f64
                + 0.587 * rgb.get(1, r, c) as f64
                + 0.114 * rgb.get(2, r, c) as f64;
            luma.set(0, r, c, v.round() as u8);
        }
    }
    let threshold = match otsu_threshold(&luma) {
        Ok(t) => t,
        Err(Error::DegenerateHistogram(_)) => return BinaryMask::zeros(h, w),
        Err(e) => return Err(e),
    };
    let mask = BinaryMask::from_fn(h, w, |r, c| luma.get(0, r, c) <= threshold)?;
    let mask = remove_small(&mask, RemoveMode::Objects, min_object);
    Ok(remove_small(&mask, RemoveMode::Holes, min_hole))
}

/// Tiles the extent into non-overlapping patch-sized cells (partial border
/// cells are discarded) and keeps cells that contain at least
/// `min_epithelium_px` intra-epithelial pixels (layer labels 2..=4) and at
/// least `min_tissue` tissue fraction. Output is sorted by (row, col).
pub fn select_patches(
    tissue: &BinaryMask,
    layers: &Raster2D<u8>,
    params: &TileParams,
) -> Result<Vec<TileSpec>> {
    let (h, w) = tissue.extent();
    if layers.extent() != (h, w) {
        return Err(Error::shape_mismatch((h, w), layers.extent()));
    }
    if params.patch == 0 {
        return Err(Error::InvalidParam("patch size must be positive".into()));
    }
    if params.patch > h || params.patch > w {
        return Err(Error::PatchLargerThanImage {
            patch: params.patch,
            height: h,
            width: w,
        });
    }
    let patch = params.patch;
    let mut tiles = Vec::new();
    for tr in 0..h / patch {
        for tc in 0..w / patch {
            let (r0, c0) = (tr * patch, tc * patch);
            let mut tissue_px = 0usize;
            let mut epithelium_px = 0usize;
            for r in r0..r0 + patch {
                for c in c0..c0 + patch {
                    tissue_px += tissue.get(r, c) as usize;
                    let layer = layers.get(0, r, c);
                    if layer > 4 {
                        return Err(Error::InvalidLayerLabel(layer));
                    }
                    epithelium_px += (layer >= 2) as usize;
                }
            }
            let tissue_fraction = tissue_px as f64 / (patch * patch) as f64;
            let has_epithelium = epithelium_px >= params.min_epithelium_px;
            if has_epithelium && tissue_fraction >= params.min_tissue {
                tiles.push(TileSpec {
                    origin: (r0, c0),
                    size: patch,
                    tissue_fraction,
                    has_epithelium,
                });
            }
        }
    }
    Ok(tiles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_canvas(h: usize, w: usize) -> Raster2D<u8> {
        Raster2D::filled(h, w, 3, 255u8).unwrap()
    }

    fn paint_block(rgb: &mut Raster2D<u8>, top: usize, left: usize, side: usize, value: u8) {
        for r in top..top + side {
            for c in left..left + side {
                for ch in 0..3 {
                    rgb.set(ch, r, c, value);
                }
            }
        }
    }

    #[test]
    fn pure_white_slide_has_no_tissue() {
        let mask = tissue_mask(&white_canvas(64, 64), 16, 16).unwrap();
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn gray_block_survives_cleanup() {
        let mut rgb = white_canvas(128, 128);
        paint_block(&mut rgb, 10, 10, 100, 128);
        let mask = tissue_mask(&rgb, 64, 64).unwrap();
        assert_eq!(mask.count_ones(), 100 * 100);
        assert!(mask.get(10, 10) && mask.get(109, 109));
        assert!(!mask.get(0, 0));
    }

    #[test]
    fn small_speck_is_removed() {
        let mut rgb = white_canvas(128, 128);
        paint_block(&mut rgb, 10, 10, 100, 128);
        paint_block(&mut rgb, 120, 120, 2, 128); // 4-pixel speck
        let mask = tissue_mask(&rgb, 64, 64).unwrap();
        assert_eq!(mask.count_ones(), 100 * 100);
        assert!(!mask.get(120, 120));
    }

    #[test]
    fn full_epithelium_slide_tiles_exactly() {
        let tissue = BinaryMask::from_fn(512, 512, |_, _| true).unwrap();
        let layers = Raster2D::filled(512, 512, 1, 3u8).unwrap();
        let tiles = select_patches(&tissue, &layers, &TileParams::default()).unwrap();
        assert_eq!(tiles.len(), 4);
        let origins: Vec<(usize, usize)> = tiles.iter().map(|t| t.origin).collect();
        assert_eq!(origins, vec![(0, 0), (0, 256), (256, 0), (256, 256)]);
        assert!(tiles.iter().all(|t| t.tissue_fraction == 1.0 && t.has_epithelium));
    }

    #[test]
    fn low_tissue_tile_is_rejected() {
        // 5% tissue in the only cell
        let tissue = BinaryMask::from_fn(256, 256, |r, c| r < 64 && c < 52).unwrap();
        let fraction = (64.0 * 52.0) / (256.0 * 256.0);
        assert!(fraction < 0.1 && fraction > 0.05 - 0.001);
        let layers = Raster2D::filled(256, 256, 1, 3u8).unwrap();
        let tiles = select_patches(&tissue, &layers, &TileParams::default()).unwrap();
        assert!(tiles.is_empty());
    }

    #[test]
    fn tissue_fraction_boundary_is_inclusive() {
        // exactly 10% of a 10x10 patch
        let tissue = BinaryMask::from_fn(10, 10, |r, _| r == 0).unwrap();
        let layers = Raster2D::filled(10, 10, 1, 2u8).unwrap();
        let params = TileParams {
            patch: 10,
            ..TileParams::default()
        };
        let tiles = select_patches(&tissue, &layers, &params).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].tissue_fraction, 0.1);
    }

    #[test]
    fn connective_only_tile_is_rejected() {
        let tissue = BinaryMask::from_fn(256, 256, |_, _| true).unwrap();
        let layers = Raster2D::filled(256, 256, 1, 1u8).unwrap(); // all 'other'
        let tiles = select_patches(&tissue, &layers, &TileParams::default()).unwrap();
        assert!(tiles.is_empty());
    }

    #[test]
    fn partial_border_cells_are_discarded() {
        let tissue = BinaryMask::from_fn(300, 520, |_, _| true).unwrap();
        let layers = Raster2D::filled(300, 520, 1, 4u8).unwrap();
        let tiles = select_patches(&tissue, &layers, &TileParams::default()).unwrap();
        // 300/256 = 1 row, 520/256 = 2 cols
        assert_eq!(tiles.len(), 2);
    }

    #[test]
    fn oversized_patch_is_an_error() {
        let tissue = BinaryMask::zeros(128, 128).unwrap();
        let layers = Raster2D::filled(128, 128, 1, 0u8).unwrap();
        assert!(matches!(
            select_patches(&tissue, &layers, &TileParams::default()),
            Err(Error::PatchLargerThanImage { .. })
        ));
    }
}
