//! `quditc trajectory`: time-resolved level populations while a gate pulse
//! (or a train of repetitions) plays.

use anyhow::anyhow;
use std::path::PathBuf;

use crate::commands::compile::Settings;
use crate::config::{
    config_err, parse_reps, repeat_pulse, resolve_targets, run_err, stream, task_seed, CmdResult,
    Context, QpuSpec,
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

    /// Initial levels to start from, comma-separated (default: all)
    #[arg(long, value_name = "LIST")]
    pub init: Option<String>,

    /// Pulse repetition counts, comma-separated
    #[arg(long, value_name = "LIST")]
    pub reps: Option<String>,

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

fn parse_levels(text: &str, levels: usize) -> anyhow::Result<Vec<usize>> {
    let list: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("initial levels must be comma-separated integers, got `{text}`"))?;
    if list.is_empty() {
        return Err(anyhow!("initial level list is empty"));
    }
    for &l in &list {
        if l >= levels {
            return Err(anyhow!("initial level {l} out of range for {levels} levels"));
        }
    }
    Ok(list)
}

pub fn run(ctx: &Context, args: &Args) -> CmdResult {
    let shots = ctx.shots_or(0);
    let inits = match &args.init {
        Some(text) => parse_levels(text, ctx.dev.levels).map_err(config_err)?,
        None => (0..ctx.dev.levels).collect(),
    };
    let reps = match &args.reps {
        Some(text) => parse_reps(text).map_err(config_err)?,
        None => ctx.file.reps.clone().unwrap_or_else(|| vec![1]),
    };

    let mut targets = resolve_targets(ctx, &args.gate, None, &args.matrix)?;
    if targets.len() != 1 {
        return Err(config_err(anyhow!("trajectory runs a single gate")));
    }
    let target = targets.remove(0);
    let run_info = RunInfo::new(ctx, "trajectory", shots);

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

    let mut columns = vec!["t_ns".to_string()];
    columns.extend((0..ctx.dev.levels).map(|l| format!("p{l}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();

    let mut task = 0u64;
    for &level in &inits {
        for &n in &reps {
            let train = repeat_pulse(&played, n).map_err(run_err)?;
            let mut qpu = spec.build(ctx, task_seed(ctx.seed, stream::TRAJECTORY, task))?;
            task += 1;
            let records = qpu
                .trajectory_experiment(&train, level, shots)
                .map_err(run_err)?;

            let mut csv = CsvDoc::new(&run_info, &columns);
            csv.note("gate", &target.name)
                .note("initial_level", level)
                .note("repetitions", n)
                .note("duration_ns", num(train.duration_ns));
            for rec in &records {
                let mut cells = vec![num(rec.t_ns)];
                cells.extend(rec.populations.iter().map(|&p| num(p)));
                csv.row(cells);
            }
            let name = format!("trajectory_init{level}_x{n}.csv");
            csv.write(&ctx.out_path(&name)).map_err(run_err)?;
            println!("{name}: {} samples", records.len());
        }
    }
    Ok(())
}
