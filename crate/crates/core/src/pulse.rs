//! Piecewise-constant control pulses and their frequency-domain view.

use crate::error::{Error, Result};
use crate::fft::{bin_frequency_ghz, fft_forward};
use crate::linalg::C64;
use serde::{Deserialize, Serialize};

/// Rotating-frame tag for pulses defined relative to the 0-1 transition.
pub const FRAME_ROT01: &str = "rot01";

/// A piecewise-constant two-quadrature drive envelope.
///
/// `p_mhz[k]` / `q_mhz[k]` hold over the interval `[k, k+1) / sample_rate`
/// (zero-order hold). Amplitudes are Rabi frequencies in MHz in the frame
/// rotating at the 0-1 transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    /// Samples per nanosecond.
    pub sample_rate: u32,
    /// Total duration in ns; always `p_mhz.len() / sample_rate`.
    pub duration_ns: f64,
    pub p_mhz: Vec<f64>,
    pub q_mhz: Vec<f64>,
    /// Rotating-frame reference tag.
    pub frame: String,
}

impl ControlPulse {
    pub fn new(sample_rate: u32, p_mhz: Vec<f64>, q_mhz: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidPulse("sample_rate must be positive".into()));
        }
        if p_mhz.is_empty() || p_mhz.len() != q_mhz.len() {
            return Err(Error::InvalidPulse(format!(
                "quadrature lengths must match and be nonzero (p: {}, q: {})",
                p_mhz.len(),
                q_mhz.len()
            )));
        }
        let duration_ns = p_mhz.len() as f64 / sample_rate as f64;
        Ok(ControlPulse {
            sample_rate,
            duration_ns,
            p_mhz,
            q_mhz,
            frame: FRAME_ROT01.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.p_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_mhz.is_empty()
    }

    /// Checks the length/rate/duration invariants (useful after
    /// deserializing from JSON).
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.p_mhz.is_empty() || self.p_mhz.len() != self.q_mhz.len() {
            return Err(Error::InvalidPulse("inconsistent sample arrays".into()));
        }
        let expect = self.p_mhz.len() as f64 / self.sample_rate as f64;
        if (self.duration_ns - expect).abs() > 1e-9 {
            return Err(Error::InvalidPulse(format!(
                "duration {} ns does not match {} samples at {} /ns",
                self.duration_ns,
                self.p_mhz.len(),
                self.sample_rate
            )));
        }
        if !self.p_mhz.iter().chain(self.q_mhz.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPulse("non-finite sample".into()));
        }
        Ok(())
    }

    /// Complex baseband samples p + i q.
    pub fn baseband(&self) -> Vec<C64> {
        self.p_mhz
            .iter()
            .zip(self.q_mhz.iter())
            .map(|(&p, &q)| C64::new(p, q))
            .collect()
    }

    /// Peak quadrature amplitude in MHz.
    pub fn max_amplitude_mhz(&self) -> f64 {
        self.p_mhz
            .iter()
            .chain(self.q_mhz.iter())
            .fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Block-averages down to `output_rate` samples per ns. The output rate
    /// must divide the input rate; duration is preserved. Averaging acts as
    /// the hardware's output filter: a tone at f MHz is attenuated by
    /// ~sinc(pi f / output_rate_mhz).
    pub fn downsample(&self, output_rate: u32) -> Result<ControlPulse> {
        if output_rate == 0 || self.sample_rate % output_rate != 0 {
            return Err(Error::InvalidPulse(format!(
                "output rate {} must divide sample rate {}",
                output_rate, self.sample_rate
            )));
        }
        let block = (self.sample_rate / output_rate) as usize;
        let avg = |xs: &[f64]| -> Vec<f64> {
            xs.chunks(block)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        };
        let mut out = ControlPulse::new(output_rate, avg(&self.p_mhz), avg(&self.q_mhz))?;
        out.frame = self.frame.clone();
        Ok(out)
    }
}

/// One-sided complex spectrum of a pulse, sorted by frequency.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Bin centers in MHz, ascending, spanning [-rate/2, rate/2).
    pub freq_mhz: Vec<f64>,
    /// Unnormalized DFT values of p + i q at those bins.
    pub values: Vec<C64>,
}

impl Spectrum {
    /// |value|^2 per bin.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Fraction of total power within +/- window_mhz of any of the given
    /// center frequencies (MHz).
    pub fn power_fraction_near(&self, centers_mhz: &[f64], window_mhz: f64) -> f64 {
        let total: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let near: f64 = self
            .freq_mhz
            .iter()
            .zip(self.values.iter())
            .filter(|(f, _)| centers_mhz.iter().any(|c| (*f - c).abs() <= window_mhz))
            .map(|(_, z)| z.norm_sqr())
            .sum();
        near / total
    }
}

/// DFT of the complex baseband p + i q, returned sorted by bin frequency.
pub fn pulse_fft(pulse: &ControlPulse) -> Spectrum {
    let mut data = pulse.baseband();
    let n = data.len();
    fft_forward(&mut data);
    let mut bins: Vec<(f64, C64)> = data
        .into_iter()
        .enumerate()
        .map(|(k, z)| (1e3 * bin_frequency_ghz(k, n, pulse.sample_rate as f64), z))
        .collect();
    bins.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Spectrum {
        freq_mhz: bins.iter().map(|b| b.0).collect(),
        values: bins.iter().map(|b| b.1).collect(),
    }
}
