//! `histoseg evaluate`: the full metric suite over one gt/pred pair.

use std::path::PathBuf;

use clap::Args;

use histoseg_core::bundle::LayerClass;
use histoseg_core::metrics::{compute_report, MetricsReport};
use histoseg_core::raster::InstanceLabelMap;

use crate::classes;
use crate::errors::CmdResult;
use crate::tensor;

use super::write_canonical;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    gt_instances: PathBuf,
    #[arg(long)]
    pred_instances: PathBuf,
    /// Final classes (other|basal|epithelium|keratin); accepts nuclei.json.
    #[arg(long)]
    gt_classes: PathBuf,
    #[arg(long)]
    pred_classes: PathBuf,
    #[arg(long)]
    gt_layers: PathBuf,
    #[arg(long)]
    pred_layers: PathBuf,
    /// Report output path (canonical JSON).
    #[arg(long)]
    report: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> CmdResult<()> {
    let gt_instances = InstanceLabelMap::from_raster(tensor::read_labels(&args.gt_instances)?)?;
    let pred_instances = InstanceLabelMap::from_raster(tensor::read_labels(&args.pred_instances)?)?;
    let gt_classes = classes::read_final_classes(&args.gt_classes)?;
    let pred_classes = classes::read_final_classes(&args.pred_classes)?;
    let gt_layers = tensor::read_u8_map(&args.gt_layers)?;
    let pred_layers = tensor::read_u8_map(&args.pred_layers)?;

    let report = compute_report(
        &gt_instances,
        &pred_instances,
        &gt_classes,
        &pred_classes,
        &gt_layers,
        &pred_layers,
    )?;

    write_canonical(&args.report, &serde_json::to_value(&report).expect("report serializes"))?;
    print!("{}", render_table(&report));
    Ok(())
}

/// Fixed-width summary tables.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str("Nuclear instance segmentation / classification\n");
    out.push_str(
        "  Dice     AJI      DQ       SQ       PQ       Fd       Fc_o     Fc_b     Fc_e\n",
    );
    out.push_str(&format!(
        "  {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4}\n",
        report.dice,
        report.aji,
        report.dq,
        report.sq,
        report.pq,
        report.f_d,
        report.f_c_other,
        report.f_c_basal,
        report.f_c_epithelium,
    ));
    out.push_str("\nLayer segmentation (per-class F1)\n");
    out.push_str(
        "  Bkgd     Other    Basal    Epith    Keratin  Mean     Prec     Recall   Acc\n",
    );
    let classes = LayerClass::ALL.map(|c| *report.layer.class(c));
    let mean_precision = classes.iter().map(|s| s.precision).sum::<f64>() / 5.0;
    let mean_recall = classes.iter().map(|s| s.recall).sum::<f64>() / 5.0;
    out.push_str(&format!(
        "  {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4} {:<8.4}\n",
        report.layer.background.f1,
        report.layer.other.f1,
        report.layer.basal.f1,
        report.layer.epithelium.f1,
        report.layer.keratin.f1,
        report.layer.mean_f1,
        mean_precision,
        mean_recall,
        report.layer.accuracy,
    ));
    out
}
