//! `histoseg losses`: loss breakdown between a prediction directory and a
//! target directory, and the finite-difference gradient verifier.

use std::path::PathBuf;

use clap::Args;

use histoseg_core::losses::{gradcheck, total_loss};

use crate::cjson;
use crate::config::RunConfig;
use crate::errors::{CmdError, CmdResult};

use super::{apply_overrides, read_bundle_dir, read_target_dir};

/// Gradient checks must stay below this relative error.
const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Args, Debug)]
pub struct LossesArgs {
    /// Directory holding np/hover/nc/ls.hst predictions.
    #[arg(long, required_unless_present = "grad_check")]
    pred_dir: Option<PathBuf>,
    /// Directory holding np/hover/nc/ls.hst targets.
    #[arg(long, required_unless_present = "grad_check")]
    target_dir: Option<PathBuf>,
    /// Optional config file (key = value lines).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Inline config overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Verify every analytic gradient against central finite differences
    /// instead of evaluating files.
    #[arg(long)]
    grad_check: bool,
    /// Random inputs per loss term for --grad-check.
    #[arg(long, default_value_t = 100)]
    grad_cases: usize,
    /// Seed for --grad-check inputs.
    #[arg(long, default_value_t = 0)]
    grad_seed: u64,
}

pub fn run(args: &LossesArgs) -> CmdResult<()> {
    if args.grad_check {
        let report = gradcheck::check_all(args.grad_cases, args.grad_seed);
        let value = serde_json::to_value(&report).expect("report serializes");
        print!("{}", cjson::to_canonical_string(&value));
        if !report.passes(GRAD_TOLERANCE) {
            return Err(CmdError::Verification(format!(
                "gradient check failed: max relative error {} > {GRAD_TOLERANCE}",
                report.max_rel_err
            )));
        }
        return Ok(());
    }

    let mut cfg = RunConfig::load(args.params.as_deref())?;
    apply_overrides(&mut cfg, &args.overrides)?;

    let pred = read_bundle_dir(args.pred_dir.as_deref().expect("clap enforces presence"))?;
    let target = read_target_dir(args.target_dir.as_deref().expect("clap enforces presence"))?;
    let mask = target.nucleus_mask();
    let breakdown = total_loss(&pred, &target, &cfg.weights, &mask)?;
    let value = serde_json::to_value(breakdown).expect("breakdown serializes");
    print!("{}", cjson::to_canonical_string(&value));
    Ok(())
}
