//! `histoseg synth`: deterministic synthetic scene plus prediction bundle.

use std::path::PathBuf;

use clap::Args;

use histoseg_core::postproc::fuse_nuclei_layers;
use histoseg_core::synth::{corrupt, generate_scene, perfect_bundle, CorruptionParams, SceneParams};

use crate::classes;
use crate::errors::CmdResult;
use crate::tensor;

use super::{ensure_dir, records_to_json, write_bundle_dir, write_canonical};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square tile side length.
    #[arg(long, default_value_t = 256)]
    extent: usize,
    /// Number of nuclei to place.
    #[arg(long, default_value_t = 20)]
    nuclei: usize,
    /// Minimum semi-axis of nucleus ellipses.
    #[arg(long, default_value_t = 7)]
    radius_min: usize,
    /// Maximum semi-axis of nucleus ellipses.
    #[arg(long, default_value_t = 10)]
    radius_max: usize,
    /// Minimum pixel gap between nuclei.
    #[arg(long, default_value_t = 2)]
    min_gap: usize,
    /// Gaussian noise on the softmax channels.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Gaussian noise on the distance maps.
    #[arg(long, default_value_t = 0.0)]
    hover_sigma: f64,
    /// Boundary-jitter rounds on the NP mask.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

pub fn run(args: &SynthArgs) -> CmdResult<()> {
    let params = SceneParams {
        seed: args.seed,
        extent: args.extent,
        nucleus_count: args.nuclei,
        radius_range: (args.radius_min, args.radius_max),
        min_gap: args.min_gap,
        ..SceneParams::default()
    };
    let scene = generate_scene(&params)?;
    let bundle = perfect_bundle(&scene)?;
    let corruption = CorruptionParams {
        gaussian_sigma: args.sigma,
        hover_noise_sigma: args.hover_sigma,
        boundary_jitter: args.jitter,
    };
    let bundle = corrupt(&bundle, &corruption, args.seed);

    // ground-truth final classes come from fusing the scene with itself
    let (records, _) = fuse_nuclei_layers(&scene.instances, &scene.nucleus_classes, &scene.layer_map)?;

    ensure_dir(&args.out_dir)?;
    tensor::write_u32(&args.out_dir.join("instances.hst"), scene.instances.raster())?;
    tensor::write_u8(&args.out_dir.join("layer_map.hst"), &scene.layer_map)?;
    classes::write_nucleus_classes(&args.out_dir.join("classes.json"), &scene.nucleus_classes)?;
    write_canonical(&args.out_dir.join("nuclei.json"), &records_to_json(&records))?;
    write_bundle_dir(&args.out_dir, &bundle)?;
    Ok(())
}
