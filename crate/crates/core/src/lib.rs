//! Qutrit pulse synthesis and characterization toolkit.
//!
//! The crate models a fixed-frequency transmon truncated to its lowest two
//! or three levels, synthesizes piecewise-constant microwave pulses that
//! realize target unitaries, distorts and calibrates those pulses against a
//! simulated transmission line, executes them on a noisy virtual QPU, and
//! reconstructs what was actually implemented via process tomography.
//!
//! Layering, bottom up:
//!
//! * [`linalg`], [`fft`]: dense complex matrices, Hermitian eigensolver,
//!   FFT wrappers. Everything downstream is deterministic given a seed.
//! * [`device`], [`pulse`], [`transmon`]: device parameter sets, pulse
//!   containers, and the rotating-frame model that turns one into physics.
//! * [`compiler`]: gradient-based pulse synthesis against a fidelity goal.
//! * [`calibration`]: frequency-domain transfer-function fitting and
//!   measurement-confusion handling.
//! * [`qpu`]: open-system (Lindblad) evolution, shot sampling, and the
//!   virtual device used by the command-line tools.
//! * [`bases`], [`process`], [`tomography`]: operator bases, process
//!   matrices, and maximum-likelihood process reconstruction.

pub mod bases;
pub mod calibration;
pub mod compiler;
pub mod device;
pub mod error;
pub mod fft;
pub mod gates;
pub mod linalg;
pub mod process;
pub mod pulse;
pub mod qpu;
pub mod tomography;
pub mod transmon;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
