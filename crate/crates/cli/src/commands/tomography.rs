//! `quditc tomography`: full process tomography of one gate, with an
//! optional repetition sweep for separating gate error from read-out error.

use anyhow::anyhow;
use quditc_core::process::{process_fidelity, unitary_to_chi};
use quditc_core::tomography::{
    chi_pauli_table, pgdb_reconstruct, qpt_experiment, repeated_gate_fidelity, PrepMode,
    Reconstruction,
};
use serde::Serialize;
use std::path::PathBuf;

use crate::commands::compile::Settings;
use crate::config::{
    config_err, parse_reps, resolve_targets, run_err, stream, task_seed, CmdResult, Context,
    QpuSpec,
};
use crate::output::{num, write_json, CsvDoc, RunInfo};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Named gate target (`ssw02`)
    #[arg(long)]
    pub gate: Option<String>,

    /// JSON file holding a complex target matrix
    #[arg(long, value_name = "FILE", conflicts_with = "gate")]
    pub matrix: Option<PathBuf>,

    /// Apply the gate this many times before measuring
    #[arg(long)]
    pub gate_reps: Option<usize>,

    /// Also sweep these repetition counts (`1,2,4,8`) and fit per-gate fidelity
    #[arg(long, value_name = "LIST")]
    pub sweep: Option<String>,

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

#[derive(Serialize)]
struct TomographyDocument<'a> {
    run: RunInfo,
    gate: &'a str,
    target_seed: u64,
    gate_reps: usize,
    raw_counts: bool,
    compile_fidelity: f64,
    process_fidelity: f64,
    reconstruction_cost: f64,
    reconstruction_iterations: usize,
    reconstruction_converged: bool,
    tp_residual: f64,
    min_eigenvalue: f64,
}

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let shots = ctx.shots_or(10_000);
    let gate_reps = args.gate_reps.or(ctx.file.gate_reps).unwrap_or(1);
    if gate_reps == 0 {
        return Err(config_err(anyhow!("--gate-reps must be at least 1")));
    }
    let raw = args.raw || ctx.file.raw.unwrap_or(false);

    let mut targets = resolve_targets(ctx, &args.gate, None, &args.matrix)?;
    if targets.len() != 1 {
        return Err(config_err(anyhow!("tomography runs a single gate")));
    }
    let target = targets.remove(0);
    let run_info = RunInfo::new(ctx, "tomography", shots);

    let spec = QpuSpec {
        noiseless: args.noiseless || ctx.file.noiseless.unwrap_or(false),
        confusion_error: args
            .confusion_error
            .or(ctx.file.confusion_error)
            .unwrap_or(0.0),
        distortion: QpuSpec::distortion_from_flags(ctx, args.distort_gamma, args.distort_sigma)?,
    };

    let settings = Settings::resolve(ctx, &super::compile::Args::default());
    let req = settings.request(target.matrix.clone(), task_seed(ctx.seed, stream::COMPILE, 0));
    let compiled = quditc_core::compiler::compile(&req, &ctx.dev).map_err(run_err)?;
    let played = ctx.outgoing(&compiled.synthesis_pulse)?;

    let mut qpu = spec.build(ctx, task_seed(ctx.seed, stream::QPT, 0))?;
    let data = qpt_experiment(&mut qpu, &played, gate_reps, shots, &PrepMode::Ideal)
        .map_err(run_err)?;
    let confusion = qpu.confusion().clone();
    let rec: Reconstruction =
        pgdb_reconstruct(&data, (!raw).then_some(&confusion)).map_err(run_err)?;

    // Fidelity is judged against the n-fold target when reps > 1.
    let mut un = quditc_core::CMatrix::identity(target.matrix.rows());
    for _ in 0..gate_reps {
        un = target.matrix.mul(&un);
    }
    let ideal = unitary_to_chi(&un).map_err(run_err)?;
    let fidelity = process_fidelity(&rec.chi, &ideal).map_err(run_err)?;

    let doc = TomographyDocument {
        run: run_info.clone(),
        gate: &target.name,
        target_seed: target.seed,
        gate_reps,
        raw_counts: raw,
        compile_fidelity: compiled.achieved_fidelity,
        process_fidelity: fidelity,
        reconstruction_cost: rec.cost,
        reconstruction_iterations: rec.iterations,
        reconstruction_converged: rec.converged,
        tp_residual: rec.chi.tp_residual().map_err(run_err)?,
        min_eigenvalue: rec.chi.min_eigenvalue(),
    };
    write_json(&ctx.out_path("tomography.json"), &doc).map_err(run_err)?;

    let mut csv = CsvDoc::new(&run_info, &["row", "col", "magnitude", "phase"]);
    csv.note("gate", &target.name)
        .note("gate_reps", gate_reps)
        .note("process_fidelity", num(fidelity));
    for e in chi_pauli_table(&rec.chi).map_err(run_err)? {
        csv.row(vec![e.row, e.col, num(e.magnitude), num(e.phase)]);
    }
    csv.write(&ctx.out_path("chi.csv")).map_err(run_err)?;

    println!(
        "{}: process fidelity {:.4} (reconstruction cost {}, {} iterations{})",
        target.name,
        fidelity,
        num(rec.cost),
        rec.iterations,
        if rec.converged { "" } else { ", did not converge" }
    );

    if let Some(text) = &args.sweep {
        let reps = parse_reps(text).map_err(config_err)?;
        let mut sweep_qpu = spec.build(ctx, task_seed(ctx.seed, stream::QPT, 1))?;
        let points =
            repeated_gate_fidelity(&mut sweep_qpu, &played, &target.matrix, &reps, shots)
                .map_err(run_err)?;
        let mut csv = CsvDoc::new(&run_info, &["reps", "process_fidelity", "per_gate_fidelity"]);
        csv.note("gate", &target.name);
        for p in &points {
            csv.row(vec![p.reps.to_string(), num(p.process_fidelity), num(p.per_gate_fidelity)]);
            println!(
                "x{}: process fidelity {:.4}, per-gate {:.4}",
                p.reps, p.process_fidelity, p.per_gate_fidelity
            );
        }
        csv.write(&ctx.out_path("repetition_sweep.csv")).map_err(run_err)?;
    }
    Ok(())
}
