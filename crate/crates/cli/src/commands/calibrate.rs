//! `quditc calibrate`: fit the transfer-function parameters of a (possibly
//! distorted) device from repeated-gate population measurements.

use anyhow::anyhow;
use quditc_core::calibration::{CalibrationParams, CalibrationReport};
use quditc_core::compiler::compile;
use quditc_core::gates::ssw02;
use serde::Serialize;

use crate::commands::compile::Settings;
use crate::config::{run_err, stream, task_seed, CmdResult, Context, Failure, QpuSpec};
use crate::output::{num, write_json, RunInfo};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Symmetric read-out confusion error injected into the device
    #[arg(long)]
    pub confusion_error: Option<f64>,

    /// Disable relaxation and dephasing
    #[arg(long)]
    pub noiseless: bool,

    /// Hidden line distortion: low-band and overall scale factor
    #[arg(long, value_name = "GAMMA")]
    pub distort_gamma: Option<f64>,

    /// Hidden line distortion: extra low-band scale factor
    #[arg(long, value_name = "SIGMA")]
    pub distort_sigma: Option<f64>,
}

#[derive(Serialize)]
struct CalibrationDocument<'a> {
    run: RunInfo,
    reference_gate: &'a str,
    reference_fidelity: f64,
    /// The distortion injected into the virtual line, if any, so a fit can
    /// be compared against what it was supposed to recover.
    injected: Option<CalibrationParams>,
    report: &'a CalibrationReport,
}

/// Default measurement budget per repetition count in the fit data.
pub const DEFAULT_SHOTS: u64 = 20_000;

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let shots = ctx.shots_or(DEFAULT_SHOTS);
    let run_info = RunInfo::new(ctx, "calibrate", shots);

    let spec = QpuSpec {
        noiseless: args.noiseless || ctx.file.noiseless.unwrap_or(false),
        confusion_error: args
            .confusion_error
            .or(ctx.file.confusion_error)
            .unwrap_or(0.0),
        distortion: QpuSpec::distortion_from_flags(ctx, args.distort_gamma, args.distort_sigma)?,
    };
    let qpu = spec.build(ctx, task_seed(ctx.seed, stream::QPU, 0))?;

    // The fit drives the device with a known-good reference gate; its pulse
    // is synthesized fresh so the command has no file dependencies.
    let settings = Settings::resolve(ctx, &super::compile::Args::default());
    let req = settings.request(ssw02(), task_seed(ctx.seed, stream::COMPILE, 0));
    let reference = compile(&req, &ctx.dev).map_err(run_err)?;
    if !reference.converged {
        return Err(Failure::Run(anyhow!(
            "reference pulse missed the fidelity goal ({:.6})",
            reference.achieved_fidelity
        )));
    }

    // The device integrates the full-resolution waveform; the rate-1 export
    // in the pulse file exists for hardware interchange and is known to
    // under-sample fast features.
    let report = quditc_core::calibration::calibrate(
        &reference.synthesis_pulse,
        &ssw02(),
        &qpu,
        &CalibrationParams::neutral(&ctx.dev),
        shots,
    )
    .map_err(run_err)?;

    let doc = CalibrationDocument {
        run: run_info,
        reference_gate: "ssw02",
        reference_fidelity: reference.achieved_fidelity,
        injected: spec.distortion,
        report: &report,
    };
    write_json(&ctx.out_path("calibration.json"), &doc).map_err(run_err)?;
    // Bare parameter file in the exact shape `--cal` reads back.
    write_json(&ctx.out_path("calibration_params.json"), &report.params).map_err(run_err)?;

    println!(
        "fitted gamma {} sigma {} (residual {}, {} iterations)",
        num(report.params.gamma),
        num(report.params.sigma),
        num(report.residual),
        report.iterations
    );
    if !report.converged {
        return Err(Failure::Run(anyhow!("calibration did not converge")));
    }
    Ok(())
}
