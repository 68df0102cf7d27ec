//! `quditc compile`: synthesize control pulses for one or more targets and
//! write the pulse documents plus their spectra.

use std::path::PathBuf;

use anyhow::anyhow;
use quditc_core::compiler::{compile, CompileRequest, CompileResult};
use quditc_core::pulse::pulse_fft;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    config_err, resolve_targets, run_err, stream, task_seed, CmdResult, Context, Failure, Target,
};
use crate::output::{num, write_json, CsvDoc, RunInfo};

#[derive(Debug, Default, clap::Args)]
pub struct Args {
    /// Named gate target (`ssw02`)
    #[arg(long)]
    pub gate: Option<String>,

    /// Compile this many seeded Haar-random targets
    #[arg(long, value_name = "N", conflicts_with_all = ["gate", "matrix"])]
    pub random: Option<usize>,

    /// JSON file holding a complex target matrix
    #[arg(long, value_name = "FILE", conflicts_with = "gate")]
    pub matrix: Option<PathBuf>,

    /// Gate duration in nanoseconds
    #[arg(long)]
    pub duration: Option<f64>,

    /// Optimizer grid density in samples per nanosecond
    #[arg(long)]
    pub synthesis_rate: Option<u32>,

    /// Output waveform rate in samples per nanosecond
    #[arg(long)]
    pub output_rate: Option<u32>,

    /// Per-quadrature drive amplitude cap in MHz
    #[arg(long)]
    pub amplitude_limit: Option<f64>,

    /// Closed-system fidelity the optimizer stops at
    #[arg(long)]
    pub fidelity_goal: Option<f64>,

    /// Optimizer iteration cap
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

/// Request knobs resolved once and echoed into every output document.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Settings {
    pub duration_ns: f64,
    pub synthesis_rate: u32,
    pub output_rate: u32,
    pub amplitude_limit_mhz: f64,
    pub fidelity_goal: f64,
    pub max_iterations: usize,
}

impl Settings {
    pub fn resolve(ctx: &Context, args: &Args) -> Settings {
        let defaults = CompileRequest::new(quditc_core::CMatrix::identity(2), 220.0);
        Settings {
            duration_ns: args.duration.or(ctx.file.duration_ns).unwrap_or(220.0),
            synthesis_rate: args
                .synthesis_rate
                .or(ctx.file.synthesis_rate)
                .unwrap_or(defaults.synthesis_rate),
            output_rate: args.output_rate.or(ctx.file.output_rate).unwrap_or(defaults.output_rate),
            amplitude_limit_mhz: args
                .amplitude_limit
                .or(ctx.file.amplitude_limit_mhz)
                .unwrap_or(defaults.amplitude_limit_mhz),
            fidelity_goal: args
                .fidelity_goal
                .or(ctx.file.fidelity_goal)
                .unwrap_or(defaults.fidelity_goal),
            max_iterations: args
                .max_iterations
                .or(ctx.file.max_iterations)
                .unwrap_or(defaults.max_iterations),
        }
    }

    pub fn request(&self, target: quditc_core::CMatrix, seed: u64) -> CompileRequest {
        CompileRequest {
            target,
            duration_ns: self.duration_ns,
            synthesis_rate: self.synthesis_rate,
            output_rate: self.output_rate,
            amplitude_limit_mhz: self.amplitude_limit_mhz,
            fidelity_goal: self.fidelity_goal,
            max_iterations: self.max_iterations,
            seed,
        }
    }
}

#[derive(Serialize)]
struct PulseDocument<'a> {
    run: RunInfo,
    gate: &'a str,
    target_seed: u64,
    compile_seed: u64,
    settings: Settings,
    result: &'a CompileResult,
}

/// One compiled target, or why it failed.
pub struct Job {
    pub target: Target,
    pub compile_seed: u64,
    pub outcome: Result<CompileResult, quditc_core::Error>,
}

/// Compiles every target in parallel with per-target derived seeds.
pub fn compile_batch(ctx: &Context, settings: &Settings, targets: Vec<Target>) -> Vec<Job> {
    targets
        .into_par_iter()
        .enumerate()
        .map(|(k, target)| {
            let compile_seed = task_seed(ctx.seed, stream::COMPILE, k as u64);
            let req = settings.request(target.matrix.clone(), compile_seed);
            let outcome = req.validate().and_then(|()| compile(&req, &ctx.dev));
            Job { target, compile_seed, outcome }
        })
        .collect()
}

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let targets = resolve_targets(ctx, &args.gate, args.random, &args.matrix)?;
    if args.random.is_some() && targets.len() > 999 {
        return Err(config_err(anyhow!("at most 999 random targets per run")));
    }
    let settings = Settings::resolve(ctx, args);
    let run_info = RunInfo::new(ctx, "compile", 0);

    let jobs = compile_batch(ctx, &settings, targets);
    let mut failures = 0usize;
    for job in &jobs {
        match &job.outcome {
            Ok(result) => {
                let doc = PulseDocument {
                    run: run_info.clone(),
                    gate: &job.target.name,
                    target_seed: job.target.seed,
                    compile_seed: job.compile_seed,
                    settings,
                    result,
                };
                write_json(&ctx.out_path(&format!("pulse_{}.json", job.target.name)), &doc)
                    .map_err(run_err)?;

                let spectrum = pulse_fft(&result.pulse);
                let mut csv = CsvDoc::new(&run_info, &["freq_mhz", "re_mhz", "im_mhz", "power"]);
                csv.note("gate", &job.target.name)
                    .note("achieved_fidelity", num(result.achieved_fidelity))
                    .note("duration_ns", num(result.duration_ns));
                for (i, &f) in spectrum.freq_mhz.iter().enumerate() {
                    let v = spectrum.values[i];
                    csv.row(vec![num(f), num(v.re), num(v.im), num(v.norm_sqr())]);
                }
                csv.write(&ctx.out_path(&format!("spectrum_{}.csv", job.target.name)))
                    .map_err(run_err)?;

                let status = if result.converged { "converged" } else { "DID NOT CONVERGE" };
                println!(
                    "{}: fidelity {:.6} after {} iterations, {status}",
                    job.target.name, result.achieved_fidelity, result.iterations
                );
                if !result.converged {
                    failures += 1;
                }
            }
            Err(e) => {
                println!("{}: failed: {e}", job.target.name);
                failures += 1;
            }
        }
    }

    if failures > 0 {
        return Err(Failure::Run(anyhow!(
            "{failures} of {} targets did not reach the fidelity goal",
            jobs.len()
        )));
    }
    Ok(())
}
