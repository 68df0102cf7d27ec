//! Flag/file resolution shared by every subcommand.
//!
//! Settings resolve in precedence order: command-line flag, then experiment
//! config file (`--config`), then the built-in default. Every random draw in
//! a run derives from the single base seed.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context as _};
use quditc_core::calibration::{CalibrationParams, ConfusionMatrix};
use quditc_core::device::DeviceParams;
use quditc_core::gates::ssw02;
use quditc_core::linalg::haar_random_unitary;
use quditc_core::pulse::ControlPulse;
use quditc_core::qpu::{NoiseModel, VirtualQpu};
use quditc_core::CMatrix;
use serde::Deserialize;

/// Outcome classification for the process exit code: configuration problems
/// exit 2, experiment failures exit 1.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

pub type CmdResult = Result<(), Failure>;

pub fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

pub fn run_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Run(e.into())
}

#[derive(Debug, clap::Args)]
pub struct GlobalArgs {
    /// Device parameter file, or a built-in preset name (`qudit`, `aspen`)
    #[arg(long, global = true, value_name = "FILE|PRESET")]
    pub device: Option<String>,

    /// Calibration parameter JSON applied to outgoing gate pulses
    #[arg(long, global = true, value_name = "FILE")]
    pub cal: Option<PathBuf>,

    /// Experiment config JSON; explicit flags override its fields
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Base seed for every random draw in the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory data files are written to
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Read-out shots per measured setting (0 = exact populations)
    #[arg(long, global = true)]
    pub shots: Option<u64>,
}

/// Experiment config file. Any field may be omitted; unknown keys are
/// rejected so typos fail loudly instead of silently running defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub device: Option<String>,
    pub cal: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub shots: Option<u64>,
    pub gate: Option<String>,
    pub random: Option<usize>,
    pub matrix: Option<String>,
    pub duration_ns: Option<f64>,
    pub synthesis_rate: Option<u32>,
    pub output_rate: Option<u32>,
    pub amplitude_limit_mhz: Option<f64>,
    pub fidelity_goal: Option<f64>,
    pub max_iterations: Option<usize>,
    pub count: Option<usize>,
    pub runs: Option<usize>,
    pub reps: Option<Vec<usize>>,
    pub gate_reps: Option<usize>,
    pub jitter_gamma: Option<f64>,
    pub jitter_freq_mhz: Option<f64>,
    pub confusion_error: Option<f64>,
    pub distort_gamma: Option<f64>,
    pub distort_sigma: Option<f64>,
    pub noiseless: Option<bool>,
    pub raw: Option<bool>,
}

/// Fully resolved run context.
pub struct Context {
    pub dev: DeviceParams,
    /// Where the device came from, for reproducibility headers.
    pub device_label: String,
    /// Pre-computed calibration applied to outgoing pulses, from `--cal`.
    pub cal: Option<CalibrationParams>,
    pub seed: u64,
    pub out: PathBuf,
    shots: Option<u64>,
    pub file: ExperimentConfig,
}

impl Context {
    pub fn resolve(args: &GlobalArgs) -> anyhow::Result<Context> {
        let file: ExperimentConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };

        let device_label = args
            .device
            .clone()
            .or_else(|| file.device.clone())
            .unwrap_or_else(|| "qudit".to_string());
        let dev = match device_label.as_str() {
            "qudit" => DeviceParams::qudit(),
            "aspen" => DeviceParams::aspen(),
            path => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading device file {path}"))?;
                DeviceParams::from_config_str(&text)
                    .with_context(|| format!("parsing device file {path}"))?
            }
        };

        let cal_path = args.cal.clone().or_else(|| file.cal.clone().map(PathBuf::from));
        let cal = match &cal_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading calibration file {}", path.display()))?;
                let params: CalibrationParams = serde_json::from_str(&text)
                    .with_context(|| format!("parsing calibration file {}", path.display()))?;
                params.validate().context("calibration file holds invalid parameters")?;
                Some(params)
            }
            None => None,
        };

        let out = args
            .out
            .clone()
            .or_else(|| file.out.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out)
            .with_context(|| format!("creating output directory {}", out.display()))?;

        Ok(Context {
            dev,
            device_label,
            cal,
            seed: args.seed.or(file.seed).unwrap_or(1),
            out,
            shots: args.shots.or(file.shots),
            file,
        })
    }

    /// Shots with a per-command default.
    pub fn shots_or(&self, default: u64) -> u64 {
        self.shots.unwrap_or(default)
    }

    /// Applies the `--cal` correction to a pulse about to be played.
    pub fn outgoing(&self, pulse: &ControlPulse) -> Result<ControlPulse, Failure> {
        match &self.cal {
            Some(params) => quditc_core::calibration::apply_calibration(pulse, params)
                .map_err(run_err),
            None => Ok(pulse.clone()),
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Seed streams keep draws for different purposes decorrelated even when
/// task indices coincide.
pub mod stream {
    pub const TARGET: u64 = 1;
    pub const COMPILE: u64 = 2;
    pub const QPU: u64 = 3;
    pub const QPT: u64 = 4;
    pub const JITTER: u64 = 5;
    pub const TRAJECTORY: u64 = 6;
}

/// Stable per-task seed: splitmix64 over (base, stream, index), so adjacent
/// base seeds do not produce overlapping task streams.
pub fn task_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.rotate_left(17) ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A named compilation target.
pub struct Target {
    pub name: String,
    pub matrix: CMatrix,
    /// Seed recorded next to random targets (0 for named/file targets).
    pub seed: u64,
}

/// Resolves the gate source flags into concrete targets. Exactly one source
/// may be given; with none, the config file decides, then `ssw02`.
pub fn resolve_targets(
    ctx: &Context,
    gate: &Option<String>,
    random: Option<usize>,
    matrix: &Option<PathBuf>,
) -> Result<Vec<Target>, Failure> {
    let sources = gate.is_some() as u8 + random.is_some() as u8 + matrix.is_some() as u8;
    if sources > 1 {
        return Err(config_err(anyhow!(
            "--gate, --random and --matrix are mutually exclusive"
        )));
    }
    let (gate, random, matrix) = if sources == 1 {
        (gate.clone(), random, matrix.clone())
    } else {
        (
            ctx.file.gate.clone(),
            ctx.file.random,
            ctx.file.matrix.clone().map(PathBuf::from),
        )
    };

    if let Some(n) = random {
        if n == 0 {
            return Err(config_err(anyhow!("--random needs at least one gate")));
        }
        let width = if n > 100 { 3 } else { 2 };
        return Ok((0..n)
            .map(|k| {
                let seed = task_seed(ctx.seed, stream::TARGET, k as u64);
                Target {
                    name: format!("random_{k:0width$}"),
                    matrix: haar_random_unitary(ctx.dev.levels, seed),
                    seed,
                }
            })
            .collect());
    }
    if let Some(path) = matrix {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading matrix file {}", path.display()))
            .map_err(config_err)?;
        let m: CMatrix = serde_json::from_str(&text)
            .with_context(|| format!("parsing matrix file {}", path.display()))
            .map_err(config_err)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "matrix".to_string());
        return Ok(vec![Target { name, matrix: m, seed: 0 }]);
    }
    match gate.as_deref().unwrap_or("ssw02") {
        "ssw02" => Ok(vec![Target { name: "ssw02".into(), matrix: ssw02(), seed: 0 }]),
        other => Err(config_err(anyhow!(
            "unknown gate `{other}` (named gates: ssw02)"
        ))),
    }
}

/// Virtual-QPU construction shared by the experiment commands.
pub struct QpuSpec {
    pub noiseless: bool,
    pub confusion_error: f64,
    pub distortion: Option<CalibrationParams>,
}

impl QpuSpec {
    /// Folds the distortion flag pair into parameters; both or neither.
    pub fn distortion_from_flags(
        ctx: &Context,
        gamma: Option<f64>,
        sigma: Option<f64>,
    ) -> Result<Option<CalibrationParams>, Failure> {
        let gamma = gamma.or(ctx.file.distort_gamma);
        let sigma = sigma.or(ctx.file.distort_sigma);
        match (gamma, sigma) {
            (None, None) => Ok(None),
            (Some(g), Some(s)) => {
                let params = CalibrationParams {
                    gamma: g,
                    sigma: s,
                    ..CalibrationParams::neutral(&ctx.dev)
                };
                params.validate().map_err(config_err)?;
                Ok(Some(params))
            }
            _ => Err(config_err(anyhow!(
                "--distort-gamma and --distort-sigma must be given together"
            ))),
        }
    }

    pub fn build(&self, ctx: &Context, seed: u64) -> Result<VirtualQpu, Failure> {
        let noise = if self.noiseless {
            NoiseModel::none()
        } else {
            NoiseModel::from_device(&ctx.dev)
        };
        let confusion =
            ConfusionMatrix::symmetric(ctx.dev.levels, self.confusion_error).map_err(config_err)?;
        let qpu = VirtualQpu::new(ctx.dev.clone(), noise, confusion, seed).map_err(config_err)?;
        match &self.distortion {
            Some(truth) => qpu.with_hidden_distortion(*truth).map_err(config_err),
            None => Ok(qpu),
        }
    }
}

/// Comma-separated repetition list (`"1,2,4,8"`).
pub fn parse_reps(text: &str) -> anyhow::Result<Vec<usize>> {
    let reps: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("repetition list must be comma-separated integers, got `{text}`"))?;
    if reps.is_empty() || reps.contains(&0) {
        bail!("repetition counts must be positive");
    }
    Ok(reps)
}

/// n copies of the waveform back to back.
pub fn repeat_pulse(pulse: &ControlPulse, n: usize) -> anyhow::Result<ControlPulse> {
    Ok(ControlPulse::new(pulse.sample_rate, pulse.p_mhz.repeat(n), pulse.q_mhz.repeat(n))?)
}
