//! `histoseg postprocess`: prediction tensors into instance labels, final
//! class maps, cleaned layer maps and nucleus records.

use std::path::PathBuf;

use clap::Args;

use histoseg_core::bundle::FinalClass;
use histoseg_core::postproc::{run_full_postprocess, PostprocOutput};
use histoseg_core::raster::Raster2D;

use crate::config::{init_workers, RunConfig};
use crate::errors::CmdResult;
use crate::{ppm, tensor};

use super::{apply_overrides, ensure_dir, read_bundle, records_to_json, write_canonical};

#[derive(Args, Debug)]
pub struct PostprocessArgs {
    /// NP branch tensor (.hst, 2-channel float softmax).
    #[arg(long)]
    np: PathBuf,
    /// Distance-map tensor (.hst, 2-channel float: horizontal, vertical).
    #[arg(long)]
    hover: PathBuf,
    /// NC branch tensor (.hst, 3-channel float softmax).
    #[arg(long)]
    nc: PathBuf,
    /// LS branch tensor (.hst, 5-channel float softmax).
    #[arg(long)]
    ls: PathBuf,
    /// Optional config file (key = value lines).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Inline config overrides, e.g. --set np_threshold=0.6 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = auto).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write a class-coloured overlay.ppm.
    #[arg(long)]
    overlay: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

pub fn run(args: &PostprocessArgs) -> CmdResult<()> {
    let mut cfg = RunConfig::load(args.params.as_deref())?;
    apply_overrides(&mut cfg, &args.overrides)?;
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    init_workers(cfg.workers);

    let bundle = read_bundle(&args.np, &args.hover, &args.nc, &args.ls)?;
    let (h, w) = bundle.extent();
    let params = if cfg.layer_areas_explicit {
        cfg.postproc
    } else {
        cfg.postproc.scaled_to(h, w)
    };

    let output = run_full_postprocess(&bundle, &params)?;

    ensure_dir(&args.out_dir)?;
    tensor::write_u32(&args.out_dir.join("instances.hst"), output.instances.raster())?;
    tensor::write_u8(
        &args.out_dir.join("nuclear_class_map.hst"),
        &output.nuclear_class_map,
    )?;
    tensor::write_u8(&args.out_dir.join("layer_map.hst"), &output.layer_map)?;
    write_canonical(
        &args.out_dir.join("nuclei.json"),
        &records_to_json(&output.records),
    )?;
    if args.overlay {
        ppm::write_p6(&args.out_dir.join("overlay.ppm"), &render_overlay(&output)?)?;
    }
    Ok(())
}

/// Layer classes as dimmed background, nucleus classes at full strength.
fn render_overlay(output: &PostprocOutput) -> CmdResult<Raster2D<u8>> {
    const COLORS: [(u8, u8, u8); 5] = [
        (0, 0, 0),       // background
        (255, 165, 0),   // other
        (220, 40, 40),   // basal
        (60, 200, 60),   // epithelium
        (70, 70, 230),   // keratin
    ];
    let (h, w) = output.layer_map.extent();
    let mut rgb = Raster2D::filled(h, w, 3, 0u8)?;
    for r in 0..h {
        for c in 0..w {
            let nucleus = output.nuclear_class_map.get(0, r, c);
            let (color, dim) = if nucleus > 0 {
                (COLORS[nucleus as usize], 1u8)
            } else {
                (COLORS[output.layer_map.get(0, r, c) as usize], 3u8)
            };
            rgb.set(0, r, c, color.0 / dim);
            rgb.set(1, r, c, color.1 / dim);
            rgb.set(2, r, c, color.2 / dim);
        }
    }
    // sanity: painted values always come from the class table
    debug_assert!(output
        .nuclear_class_map
        .data()
        .iter()
        .all(|&v| v == 0 || FinalClass::from_value(v).is_ok()));
    Ok(rgb)
}
