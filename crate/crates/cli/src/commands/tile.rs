//! `histoseg tile`: tissue masking and patch selection over a slide image.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::{Map, Value};

use histoseg_core::raster::Raster2D;
use histoseg_core::tiling::{select_patches, tissue_mask, TileSpec};

use crate::config::{init_workers, RunConfig};
use crate::errors::{CmdError, CmdResult};
use crate::{ppm, tensor};

use super::{apply_overrides, ensure_dir, write_canonical};

#[derive(Args, Debug)]
pub struct TileArgs {
    /// RGB slide image (binary PPM, P6).
    #[arg(long)]
    rgb: PathBuf,
    /// Layer label map (.hst, u8 single-channel).
    #[arg(long)]
    layers: PathBuf,
    /// Patch side length in pixels.
    #[arg(long)]
    patch: Option<usize>,
    /// Minimum tissue fraction per tile.
    #[arg(long)]
    min_tissue: Option<f64>,
    /// Minimum intra-epithelial pixel count per tile.
    #[arg(long)]
    min_epithelium_px: Option<usize>,
    /// Microns per pixel, recorded in the manifest.
    #[arg(long)]
    mpp: Option<f64>,
    /// Manifest output path (canonical JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Also write per-tile rgb/layer tensors into this directory.
    #[arg(long, value_name = "DIR")]
    extract: Option<PathBuf>,
    /// Optional config file (key = value lines).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Inline config overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for tile extraction (0 = auto).
    #[arg(long)]
    workers: Option<usize>,
}

pub fn run(args: &TileArgs) -> CmdResult<()> {
    let mut cfg = RunConfig::load(args.params.as_deref())?;
    apply_overrides(&mut cfg, &args.overrides)?;
    if let Some(patch) = args.patch {
        cfg.tile.patch = patch;
    }
    if let Some(min_tissue) = args.min_tissue {
        cfg.tile.min_tissue = min_tissue;
    }
    if let Some(min_epi) = args.min_epithelium_px {
        cfg.tile.min_epithelium_px = min_epi;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    init_workers(cfg.workers);

    let rgb = ppm::read_p6(&args.rgb)?;
    let layers = tensor::read_u8_map(&args.layers)?;
    if rgb.extent() != layers.extent() {
        return Err(CmdError::Data(format!(
            "rgb is {}x{} but layers is {}x{}",
            rgb.height(),
            rgb.width(),
            layers.height(),
            layers.width()
        )));
    }

    let tissue = tissue_mask(&rgb, cfg.tissue_min_object, cfg.tissue_min_hole)?;
    let tiles = select_patches(&tissue, &layers, &cfg.tile)?;

    let mut root = Map::new();
    if let Some(mpp) = args.mpp {
        root.insert("microns_per_pixel".into(), Value::from(mpp));
    }
    root.insert("patch_size".into(), Value::from(cfg.tile.patch as u64));
    root.insert(
        "tiles".into(),
        serde_json::to_value(&tiles).expect("tiles serialize"),
    );
    write_canonical(&args.manifest, &Value::Object(root))?;

    if let Some(extract_dir) = &args.extract {
        ensure_dir(extract_dir)?;
        tiles
            .par_iter()
            .map(|tile| extract_tile(extract_dir, &rgb, &layers, tile))
            .collect::<CmdResult<Vec<()>>>()?;
    }
    Ok(())
}

/// Writes one tile's RGB and layer crops; each tile goes to its own files,
/// so parallel extraction stays deterministic.
fn extract_tile(
    dir: &Path,
    rgb: &Raster2D<u8>,
    layers: &Raster2D<u8>,
    tile: &TileSpec,
) -> CmdResult<()> {
    let (r0, c0) = tile.origin;
    let side = tile.size;
    let mut rgb_tile = Raster2D::filled(side, side, 3, 0u8).map_err(CmdError::from)?;
    let mut layer_tile = Raster2D::filled(side, side, 1, 0u8).map_err(CmdError::from)?;
    for r in 0..side {
        for c in 0..side {
            for ch in 0..3 {
                rgb_tile.set(ch, r, c, rgb.get(ch, r0 + r, c0 + c));
            }
            layer_tile.set(0, r, c, layers.get(0, r0 + r, c0 + c));
        }
    }
    let stem = format!("r{:05}_c{:05}", r0, c0);
    tensor::write_u8(&dir.join(format!("{stem}_rgb.hst")), &rgb_tile)?;
    tensor::write_u8(&dir.join(format!("{stem}_layers.hst")), &layer_tile)
}
