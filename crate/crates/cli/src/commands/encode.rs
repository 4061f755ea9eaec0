//! `histoseg encode`: ground-truth maps into the four training-target
//! tensors.

use std::path::PathBuf;

use clap::Args;

use histoseg_core::hover::make_target_bundle;
use histoseg_core::raster::InstanceLabelMap;

use crate::classes;
use crate::errors::CmdResult;
use crate::tensor;

use super::ensure_dir;

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Instance label map (.hst, unsigned single-channel).
    #[arg(long)]
    instances: PathBuf,
    /// Nucleus classes (.json: [[label, "other"|"epithelial"], ...]).
    #[arg(long)]
    classes: PathBuf,
    /// Layer label map (.hst, u8 single-channel, values 0..=4).
    #[arg(long)]
    layers: PathBuf,
    /// Output directory for np.hst, hover.hst, nc.hst and ls.hst.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

pub fn run(args: &EncodeArgs) -> CmdResult<()> {
    let instances = InstanceLabelMap::from_raster(tensor::read_labels(&args.instances)?)?;
    let nucleus_classes = classes::read_nucleus_classes(&args.classes)?;
    let layers = tensor::read_u8_map(&args.layers)?;

    let targets = make_target_bundle(&instances, &nucleus_classes, &layers)?;

    ensure_dir(&args.out_dir)?;
    tensor::write_f64(&args.out_dir.join("np.hst"), &targets.np)?;
    tensor::write_hover(&args.out_dir.join("hover.hst"), &targets.hover)?;
    tensor::write_f64(&args.out_dir.join("nc.hst"), &targets.nc)?;
    tensor::write_f64(&args.out_dir.join("ls.hst"), &targets.ls)?;
    Ok(())
}
