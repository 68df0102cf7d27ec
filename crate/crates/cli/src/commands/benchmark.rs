//! `quditc benchmark`: compile, calibrate and tomograph a batch of random
//! gates, then summarize the process-fidelity distribution.

use anyhow::anyhow;
use quditc_core::calibration::{apply_calibration, CalibrationParams};
use quditc_core::compiler::compile;
use quditc_core::gates::ssw02;
use quditc_core::linalg::haar_random_unitary;
use quditc_core::process::{process_fidelity, unitary_to_chi};
use quditc_core::tomography::{pgdb_reconstruct, qpt_experiment, PrepMode};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::compile::Settings;
use crate::config::{config_err, run_err, stream, task_seed, CmdResult, Context, Failure, QpuSpec};
use crate::output::{num, write_json, CsvDoc, RunInfo};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of Haar-random benchmark gates
    #[arg(long)]
    pub count: Option<usize>,

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

    /// Reconstruct from raw counts instead of read-out-corrected ones
    #[arg(long)]
    pub raw: bool,
}

/// How the outgoing-pulse correction was obtained.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum Correction {
    None,
    File { params: CalibrationParams },
    Fitted { params: CalibrationParams, residual: f64, converged: bool },
}

impl Correction {
    fn params(&self) -> Option<&CalibrationParams> {
        match self {
            Correction::None => None,
            Correction::File { params } | Correction::Fitted { params, .. } => Some(params),
        }
    }
}

struct GateRow {
    name: String,
    target_seed: u64,
    compile_fidelity: f64,
    compile_converged: bool,
    outcome: Result<Recon, String>,
}

struct Recon {
    fidelity: f64,
    cost: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct Summary {
    run: RunInfo,
    count: usize,
    raw_counts: bool,
    correction: Correction,
    completed: usize,
    failed: usize,
    mean_fidelity: f64,
    std_fidelity: f64,
    min_fidelity: f64,
    max_fidelity: f64,
}

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let count = args.count.or(ctx.file.count).unwrap_or(20);
    if count == 0 {
        return Err(config_err(anyhow!("--count needs at least one gate")));
    }
    let shots = ctx.shots_or(10_000);
    let raw = args.raw || ctx.file.raw.unwrap_or(false);
    let run_info = RunInfo::new(ctx, "benchmark", shots);

    let spec = QpuSpec {
        noiseless: args.noiseless || ctx.file.noiseless.unwrap_or(false),
        confusion_error: args
            .confusion_error
            .or(ctx.file.confusion_error)
            .unwrap_or(0.0),
        distortion: QpuSpec::distortion_from_flags(ctx, args.distort_gamma, args.distort_sigma)?,
    };

    let settings = Settings::resolve(ctx, &super::compile::Args::default());

    // Pulse correction: an explicit --cal file wins; otherwise a distorted
    // line is fitted in place exactly as `calibrate` would.
    let correction = if let Some(params) = &ctx.cal {
        Correction::File { params: *params }
    } else if spec.distortion.is_some() {
        let qpu = spec.build(ctx, task_seed(ctx.seed, stream::QPU, 0))?;
        let req = settings.request(ssw02(), task_seed(ctx.seed, stream::COMPILE, 0));
        let reference = compile(&req, &ctx.dev).map_err(run_err)?;
        let report = quditc_core::calibration::calibrate(
            &reference.synthesis_pulse,
            &ssw02(),
            &qpu,
            &CalibrationParams::neutral(&ctx.dev),
            super::calibrate::DEFAULT_SHOTS,
        )
        .map_err(run_err)?;
        println!(
            "calibrated: gamma {} sigma {} (residual {})",
            num(report.params.gamma),
            num(report.params.sigma),
            num(report.residual)
        );
        Correction::Fitted {
            params: report.params,
            residual: report.residual,
            converged: report.converged,
        }
    } else {
        Correction::None
    };

    let rows: Vec<GateRow> = (0..count)
        .into_par_iter()
        .map(|k| {
            let target_seed = task_seed(ctx.seed, stream::TARGET, k as u64);
            let target = haar_random_unitary(ctx.dev.levels, target_seed);
            let name = format!("random_{k:02}");

            let req =
                settings.request(target.clone(), task_seed(ctx.seed, stream::COMPILE, k as u64 + 1));
            let compiled = match compile(&req, &ctx.dev) {
                Ok(r) => r,
                Err(e) => {
                    return GateRow {
                        name,
                        target_seed,
                        compile_fidelity: 0.0,
                        compile_converged: false,
                        outcome: Err(format!("compile: {e}")),
                    }
                }
            };

            let outcome = (|| -> Result<Recon, String> {
                // The device plays the full-resolution waveform.
                let played = match correction.params() {
                    Some(c) => {
                        apply_calibration(&compiled.synthesis_pulse, c).map_err(|e| e.to_string())?
                    }
                    None => compiled.synthesis_pulse.clone(),
                };
                let mut qpu = spec
                    .build(ctx, task_seed(ctx.seed, stream::QPT, k as u64))
                    .map_err(|_| "qpu construction".to_string())?;
                let data = qpt_experiment(&mut qpu, &played, 1, shots, &PrepMode::Ideal)
                    .map_err(|e| e.to_string())?;
                let confusion = qpu.confusion().clone();
                let rec = pgdb_reconstruct(&data, (!raw).then_some(&confusion))
                    .map_err(|e| e.to_string())?;
                let ideal = unitary_to_chi(&target).map_err(|e| e.to_string())?;
                let fidelity = process_fidelity(&rec.chi, &ideal).map_err(|e| e.to_string())?;
                Ok(Recon {
                    fidelity,
                    cost: rec.cost,
                    iterations: rec.iterations,
                    converged: rec.converged,
                })
            })();

            GateRow {
                name,
                target_seed,
                compile_fidelity: compiled.achieved_fidelity,
                compile_converged: compiled.converged,
                outcome,
            }
        })
        .collect();

    let mut csv = CsvDoc::new(
        &run_info,
        &[
            "gate",
            "target_seed",
            "compile_fidelity",
            "compile_converged",
            "process_fidelity",
            "recon_cost",
            "recon_iterations",
            "recon_converged",
            "status",
        ],
    );
    csv.note("count", count).note("raw_counts", raw);

    let mut fidelities = Vec::new();
    let mut failed = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(r) => {
                fidelities.push(r.fidelity);
                csv.row(vec![
                    row.name.clone(),
                    row.target_seed.to_string(),
                    num(row.compile_fidelity),
                    row.compile_converged.to_string(),
                    num(r.fidelity),
                    num(r.cost),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                    "ok".into(),
                ]);
                println!("{}: process fidelity {:.4}", row.name, r.fidelity);
            }
            Err(msg) => {
                failed += 1;
                csv.row(vec![
                    row.name.clone(),
                    row.target_seed.to_string(),
                    num(row.compile_fidelity),
                    row.compile_converged.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {msg}"),
                ]);
                println!("{}: FAILED ({msg})", row.name);
            }
        }
    }
    csv.write(&ctx.out_path("benchmark.csv")).map_err(run_err)?;

    let n = fidelities.len();
    let mean = if n > 0 { fidelities.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let std = if n > 1 {
        (fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let summary = Summary {
        run: run_info,
        count,
        raw_counts: raw,
        correction,
        completed: n,
        failed,
        mean_fidelity: mean,
        std_fidelity: std,
        min_fidelity: fidelities.iter().copied().fold(f64::INFINITY, f64::min),
        max_fidelity: fidelities.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    write_json(&ctx.out_path("benchmark_summary.json"), &summary).map_err(run_err)?;
    println!("mean process fidelity {:.4} over {n} gates ({failed} failed)", mean);

    if failed > 0 {
        return Err(Failure::Run(anyhow!("{failed} of {count} gates failed")));
    }
    Ok(())
}
