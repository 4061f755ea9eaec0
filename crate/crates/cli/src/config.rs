//! Run configuration: defaults, overridden by an optional `key = value`
//! config file, overridden by command-line flags, in that order.

use std::fs;
use std::path::Path;

use histoseg_core::losses::LossWeights;
use histoseg_core::postproc::PostprocParams;
use histoseg_core::tiling::{TileParams, DEFAULT_TISSUE_MIN_HOLE, DEFAULT_TISSUE_MIN_OBJECT};

use crate::errors::{CmdError, CmdResult};

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub postproc: PostprocParams,
    /// Set when layer_min_object/layer_min_hole came from the file or a
    /// flag; otherwise postprocessing rescales them to the tile area.
    pub layer_areas_explicit: bool,
    pub weights: LossWeights,
    pub tile: TileParams,
    pub tissue_min_object: usize,
    pub tissue_min_hole: usize,
    /// 0 selects the library default thread count.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            postproc: PostprocParams::default(),
            layer_areas_explicit: false,
            weights: LossWeights::default(),
            tile: TileParams::default(),
            tissue_min_object: DEFAULT_TISSUE_MIN_OBJECT,
            tissue_min_hole: DEFAULT_TISSUE_MIN_HOLE,
            workers: 0,
        }
    }
}

impl RunConfig {
    /// Defaults plus the optional config file.
    pub fn load(config: Option<&Path>) -> CmdResult<Self> {
        let mut cfg = Self::default();
        if let Some(path) = config {
            cfg.apply_file(path)?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` per line; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> CmdResult<()> {
        let text = fs::read_to_string(path).map_err(|e| CmdError::io(path.display(), e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CmdError::Io(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim()).map_err(|msg| {
                CmdError::Io(format!("{}:{}: {msg}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn float(value: &str) -> Result<f64, String> {
            value
                .parse()
                .map_err(|_| format!("'{value}' is not a number"))
        }
        fn int(value: &str) -> Result<usize, String> {
            value
                .parse()
                .map_err(|_| format!("'{value}' is not an integer"))
        }
        match key {
            "np_threshold" => self.postproc.np_threshold = float(value)?,
            "marker_gradient_threshold" => {
                self.postproc.marker_gradient_threshold = float(value)?
            }
            "min_marker_area" => self.postproc.min_marker_area = int(value)?,
            "min_nucleus_area" => self.postproc.min_nucleus_area = int(value)?,
            "layer_morph_radius" => self.postproc.layer_morph_radius = int(value)?,
            "layer_min_object" => {
                self.postproc.layer_min_object = int(value)?;
                self.layer_areas_explicit = true;
            }
            "layer_min_hole" => {
                self.postproc.layer_min_hole = int(value)?;
                self.layer_areas_explicit = true;
            }
            "lambda_hover_mse" => self.weights.hover_mse = float(value)?,
            "lambda_hover_grad" => self.weights.hover_grad = float(value)?,
            "lambda_np_ce" => self.weights.np_ce = float(value)?,
            "lambda_np_dice" => self.weights.np_dice = float(value)?,
            "lambda_nc_ce" => self.weights.nc_ce = float(value)?,
            "lambda_nc_dice" => self.weights.nc_dice = float(value)?,
            "lambda_ls_ce" => self.weights.ls_ce = float(value)?,
            "lambda_ls_dice" => self.weights.ls_dice = float(value)?,
            "patch" => self.tile.patch = int(value)?,
            "min_tissue" => self.tile.min_tissue = float(value)?,
            "min_epithelium_px" => self.tile.min_epithelium_px = int(value)?,
            "tissue_min_object" => self.tissue_min_object = int(value)?,
            "tissue_min_hole" => self.tissue_min_hole = int(value)?,
            "workers" => self.workers = int(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }
}

/// Sizes the global worker pool. 0 keeps the library default. Later calls
/// with a different size are ignored (the pool is process-global), which
/// is fine for a single-command process.
pub fn init_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}
