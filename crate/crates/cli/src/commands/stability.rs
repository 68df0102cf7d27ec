//! `quditc stability`: replay one calibrated gate across simulated runs with
//! drifting device parameters and report the fidelity spread.

use anyhow::anyhow;
use quditc_core::calibration::{CalibrationParams, ConfusionMatrix};
use quditc_core::process::{process_fidelity, unitary_to_chi};
use quditc_core::qpu::{NoiseModel, VirtualQpu};
use quditc_core::tomography::{pgdb_reconstruct, qpt_experiment, PrepMode};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::path::PathBuf;

use crate::commands::compile::Settings;
use crate::config::{
    config_err, resolve_targets, run_err, stream, task_seed, CmdResult, Context, Failure,
};
use crate::output::{num, CsvDoc, RunInfo};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Named gate target (`ssw02`)
    #[arg(long)]
    pub gate: Option<String>,

    /// JSON file holding a complex target matrix
    #[arg(long, value_name = "FILE", conflicts_with = "gate")]
    pub matrix: Option<PathBuf>,

    /// Number of simulated runs
    #[arg(long)]
    pub runs: Option<usize>,

    /// Relative standard deviation of the per-run drive-chain gain
    #[arg(long)]
    pub jitter_gamma: Option<f64>,

    /// Standard deviation of the per-run qubit-frequency drift in MHz
    #[arg(long)]
    pub jitter_freq: Option<f64>,

    /// Symmetric read-out confusion error injected into the device
    #[arg(long)]
    pub confusion_error: Option<f64>,

    /// Disable relaxation and dephasing
    #[arg(long)]
    pub noiseless: bool,
}

struct RunRow {
    gamma: f64,
    detune_mhz: f64,
    outcome: Result<(f64, bool), String>,
}

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let runs = args.runs.or(ctx.file.runs).unwrap_or(20);
    if runs == 0 {
        return Err(config_err(anyhow!("--runs needs at least one run")));
    }
    let shots = ctx.shots_or(10_000);
    let jitter_gamma = args.jitter_gamma.or(ctx.file.jitter_gamma).unwrap_or(0.01);
    let jitter_freq = args.jitter_freq.or(ctx.file.jitter_freq_mhz).unwrap_or(0.05);
    if jitter_gamma < 0.0 || jitter_freq < 0.0 {
        return Err(config_err(anyhow!("jitter magnitudes must be non-negative")));
    }
    let confusion_error = args
        .confusion_error
        .or(ctx.file.confusion_error)
        .unwrap_or(0.0);
    let noiseless = args.noiseless || ctx.file.noiseless.unwrap_or(false);

    let mut targets = resolve_targets(ctx, &args.gate, None, &args.matrix)?;
    if targets.len() != 1 {
        return Err(config_err(anyhow!("stability runs a single gate")));
    }
    let target = targets.remove(0);
    let run_info = RunInfo::new(ctx, "stability", shots);

    let settings = Settings::resolve(ctx, &super::compile::Args::default());
    let req = settings.request(target.matrix.clone(), task_seed(ctx.seed, stream::COMPILE, 0));
    let compiled = quditc_core::compiler::compile(&req, &ctx.dev).map_err(run_err)?;
    let played = ctx.outgoing(&compiled.synthesis_pulse)?;
    let ideal = unitary_to_chi(&target.matrix).map_err(run_err)?;

    let rows: Vec<RunRow> = (0..runs)
        .into_par_iter()
        .map(|r| {
            // Per-run drift: a gain wobble on the drive chain and a slow
            // qubit-frequency walk. Both draws come from the run's own
            // stream so the batch is order-independent.
            let mut rng = ChaCha12Rng::seed_from_u64(task_seed(ctx.seed, stream::JITTER, r as u64));
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let gamma = (1.0 + jitter_gamma * z1).clamp(0.05, 20.0);
            let detune_mhz = jitter_freq * z2;

            let mut dev = ctx.dev.clone();
            dev.omega01_ghz += detune_mhz * 1e-3;

            let outcome = (|| -> Result<(f64, bool), String> {
                let noise = if noiseless {
                    NoiseModel::none()
                } else {
                    NoiseModel::from_device(&dev)
                };
                let confusion = ConfusionMatrix::symmetric(dev.levels, confusion_error)
                    .map_err(|e| e.to_string())?;
                let mut qpu =
                    VirtualQpu::new(dev.clone(), noise, confusion, task_seed(ctx.seed, stream::QPT, r as u64))
                        .map_err(|e| e.to_string())?;
                if gamma != 1.0 {
                    let truth = CalibrationParams {
                        gamma,
                        sigma: 1.0,
                        ..CalibrationParams::neutral(&dev)
                    };
                    qpu = qpu.with_hidden_distortion(truth).map_err(|e| e.to_string())?;
                }
                let data = qpt_experiment(&mut qpu, &played, 1, shots, &PrepMode::Ideal)
                    .map_err(|e| e.to_string())?;
                let conf = qpu.confusion().clone();
                let rec =
                    pgdb_reconstruct(&data, Some(&conf)).map_err(|e| e.to_string())?;
                let f = process_fidelity(&rec.chi, &ideal).map_err(|e| e.to_string())?;
                Ok((f, rec.converged))
            })();

            RunRow { gamma, detune_mhz, outcome }
        })
        .collect();

    let mut csv = CsvDoc::new(
        &run_info,
        &["run", "gamma", "detune_mhz", "process_fidelity", "recon_converged", "status"],
    );
    csv.note("gate", &target.name)
        .note("runs", runs)
        .note("jitter_gamma", num(jitter_gamma))
        .note("jitter_freq_mhz", num(jitter_freq))
        .note("compile_fidelity", num(compiled.achieved_fidelity));

    let mut fidelities = Vec::new();
    let mut failed = 0usize;
    for (r, row) in rows.iter().enumerate() {
        match &row.outcome {
            Ok((f, converged)) => {
                fidelities.push(*f);
                csv.row(vec![
                    r.to_string(),
                    num(row.gamma),
                    num(row.detune_mhz),
                    num(*f),
                    converged.to_string(),
                    "ok".into(),
                ]);
            }
            Err(msg) => {
                failed += 1;
                csv.row(vec![
                    r.to_string(),
                    num(row.gamma),
                    num(row.detune_mhz),
                    String::new(),
                    String::new(),
                    format!("failed: {msg}"),
                ]);
            }
        }
    }
    csv.write(&ctx.out_path("stability.csv")).map_err(run_err)?;

    let n = fidelities.len();
    if n > 0 {
        let mean = fidelities.iter().sum::<f64>() / n as f64;
        let spread = fidelities.iter().copied().fold(f64::INFINITY, f64::min)
            ..=fidelities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{}: mean fidelity {:.4} over {n} runs (range {:.4}..{:.4})",
            target.name,
            mean,
            spread.start(),
            spread.end()
        );
    }
    if failed > 0 {
        return Err(Failure::Run(anyhow!("{failed} of {runs} runs failed")));
    }
    Ok(())
}
