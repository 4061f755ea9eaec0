//! Subcommand implementations.

pub mod encode;
pub mod evaluate;
pub mod losses;
pub mod postprocess;
pub mod synth;
pub mod tile;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use histoseg_core::bundle::{PredictionBundle, TargetBundle, LS_CHANNELS, NC_CHANNELS, NP_CHANNELS};
use histoseg_core::postproc::NucleusRecord;

use crate::cjson;
use crate::config::RunConfig;
use crate::errors::{CmdError, CmdResult};
use crate::tensor;

/// Applies repeatable `--set key=value` overrides on top of the config.
pub fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> CmdResult<()> {
    for entry in overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| CmdError::Io(format!("--set '{entry}': expected key=value")))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|msg| CmdError::Io(format!("--set '{entry}': {msg}")))?;
    }
    Ok(())
}

pub fn write_canonical(path: &Path, value: &Value) -> CmdResult<()> {
    fs::write(path, cjson::to_canonical_string(value)).map_err(|e| CmdError::io(path.display(), e))
}

pub fn records_to_json(records: &[NucleusRecord]) -> Value {
    serde_json::to_value(records).expect("records serialize")
}

pub fn read_bundle(np: &Path, hover: &Path, nc: &Path, ls: &Path) -> CmdResult<PredictionBundle> {
    let bundle = PredictionBundle {
        np: tensor::read_prob(np, NP_CHANNELS)?,
        hover: tensor::read_hover(hover)?,
        nc: tensor::read_prob(nc, NC_CHANNELS)?,
        ls: tensor::read_prob(ls, LS_CHANNELS)?,
    };
    bundle.validate().map_err(CmdError::from)?;
    Ok(bundle)
}

fn bundle_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    (
        dir.join("np.hst"),
        dir.join("hover.hst"),
        dir.join("nc.hst"),
        dir.join("ls.hst"),
    )
}

pub fn read_bundle_dir(dir: &Path) -> CmdResult<PredictionBundle> {
    let (np, hover, nc, ls) = bundle_paths(dir);
    read_bundle(&np, &hover, &nc, &ls)
}

pub fn read_target_dir(dir: &Path) -> CmdResult<TargetBundle> {
    let (np, hover, nc, ls) = bundle_paths(dir);
    let bundle = read_bundle(&np, &hover, &nc, &ls)?;
    Ok(TargetBundle {
        np: bundle.np,
        hover: bundle.hover,
        nc: bundle.nc,
        ls: bundle.ls,
    })
}

pub fn write_bundle_dir(dir: &Path, bundle: &PredictionBundle) -> CmdResult<()> {
    let (np, hover, nc, ls) = bundle_paths(dir);
    tensor::write_f64(&np, &bundle.np)?;
    tensor::write_hover(&hover, &bundle.hover)?;
    tensor::write_f64(&nc, &bundle.nc)?;
    tensor::write_f64(&ls, &bundle.ls)
}

pub fn ensure_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| CmdError::io(dir.display(), e))
}
