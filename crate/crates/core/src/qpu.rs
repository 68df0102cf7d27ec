//! Virtual three-level QPU: open-system pulse execution with readout
//! confusion, finite shots, and an optional hidden line distortion.
//!
//! The master equation is integrated by fixed-step RK4 on substeps no longer
//! than 1/64 ns. The largest Hamiltonian scale is |2 pi alpha| ~ 1.3 rad/ns,
//! so the local phase error per substep is ~(1.3/64)^5/120 and the
//! accumulated error over a 220 ns gate stays below 1e-6; a full 1 ns step
//! would not converge.

use crate::calibration::{apply_calibration, spam_correct, CalibrationParams, ConfusionMatrix};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, C64};
use crate::pulse::ControlPulse;
use crate::transmon::hamiltonian_at;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Incoherent rates in 1/us. Decay rates are 1/T1 per manifold; dephasing
/// rates are the pure-dephasing remainder max(1/T2* - 1/(2 T1), 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub decay_01_per_us: f64,
    pub decay_12_per_us: f64,
    pub dephasing_01_per_us: f64,
    pub dephasing_12_per_us: f64,
}

impl NoiseModel {
    pub fn from_device(dev: &DeviceParams) -> Self {
        let pure_dephasing = |t2s: f64, t1: f64| (1.0 / t2s - 1.0 / (2.0 * t1)).max(0.0);
        NoiseModel {
            decay_01_per_us: 1.0 / dev.t1_01_us,
            decay_12_per_us: 1.0 / dev.t1_12_us,
            dephasing_01_per_us: pure_dephasing(dev.t2s_01_us, dev.t1_01_us),
            dephasing_12_per_us: pure_dephasing(dev.t2s_12_us, dev.t1_12_us),
        }
    }

    pub fn none() -> Self {
        NoiseModel {
            decay_01_per_us: 0.0,
            decay_12_per_us: 0.0,
            dephasing_01_per_us: 0.0,
            dephasing_12_per_us: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.decay_01_per_us == 0.0
            && self.decay_12_per_us == 0.0
            && self.dephasing_01_per_us == 0.0
            && self.dephasing_12_per_us == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("decay_01", self.decay_01_per_us),
            ("decay_12", self.decay_12_per_us),
            ("dephasing_01", self.dephasing_01_per_us),
            ("dephasing_12", self.dephasing_12_per_us),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} rate must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite
/// (eigenvalues above -1e-9 to absorb integrator roundoff).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NonPhysicalState("density matrix must be square".into()));
        }
        if !matrix.is_hermitian(1e-10) {
            return Err(Error::NonPhysicalState("density matrix is not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-7 || tr.im.abs() > 1e-10 {
            return Err(Error::NonPhysicalState(format!("trace is {tr}, expected 1")));
        }
        let eig = hermitian_eigen(&matrix.hermitian_part());
        if eig.values[0] < -1e-9 {
            return Err(Error::NonPhysicalState(format!(
                "negative eigenvalue {:.3e}",
                eig.values[0]
            )));
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn basis_state(dim: usize, level: usize) -> Self {
        assert!(level < dim);
        let mut m = CMatrix::zeros(dim, dim);
        m[(level, level)] = C64::new(1.0, 0.0);
        DensityMatrix { matrix: m }
    }

    /// |psi><psi| for a column state vector, normalized first.
    pub fn pure(psi: &CMatrix) -> Result<Self> {
        if psi.cols() != 1 || psi.rows() == 0 {
            return Err(Error::NonPhysicalState("state must be a non-empty column".into()));
        }
        let norm: f64 = psi.frobenius_norm();
        if norm < 1e-12 {
            return Err(Error::NonPhysicalState("state vector has zero norm".into()));
        }
        let d = psi.rows();
        let m = CMatrix::from_fn(d, d, |i, j| psi[(i, 0)] * psi[(j, 0)].conj() / (norm * norm));
        Ok(DensityMatrix { matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// 0.5 * sum |eigenvalues| of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = self.matrix.sub(&other.matrix).hermitian_part();
        0.5 * hermitian_eigen(&diff).values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// U rho U^dagger.
    pub fn conjugate(&self, u: &CMatrix) -> DensityMatrix {
        let m = u.mul(&self.matrix).mul(&u.dagger());
        DensityMatrix { matrix: m.hermitian_part() }
    }
}

/// Substep count per pulse sample keeping each substep at or under 1/64 ns.
pub fn default_substeps(sample_rate: u32) -> u32 {
    (64 + sample_rate - 1) / sample_rate
}

struct Dissipator {
    // Element-wise damping: d(rho_ij) += damp[i*d+j] * rho_ij.
    damp: Vec<f64>,
    // Population pumping (to, from, rate): d(rho_to,to) += rate * rho_from,from.
    pump: Vec<(usize, usize, f64)>,
}

impl Dissipator {
    fn new(dim: usize, noise: &NoiseModel) -> Self {
        // Rates enter in 1/us and the clock runs in ns.
        let g1 = noise.decay_01_per_us * 1e-3;
        let g2 = noise.decay_12_per_us * 1e-3;
        let p1 = noise.dephasing_01_per_us * 1e-3;
        let p2 = noise.dephasing_12_per_us * 1e-3;
        // Sum of L^dag L over the decay operators is diagonal.
        let mut a = vec![0.0; dim];
        if dim >= 2 {
            a[1] = g1;
        }
        if dim >= 3 {
            a[2] = g2;
        }
        // Dephasing operators are diagonal; their whole action is an
        // element-wise decay at rate (d_i - d_j)^2 / 2 per operator.
        let mut dephasers: Vec<Vec<f64>> = Vec::new();
        if dim >= 2 {
            let mut d1 = vec![0.0; dim];
            d1[0] = (p1 / 2.0).sqrt();
            d1[1] = -(p1 / 2.0).sqrt();
            dephasers.push(d1);
        }
        if dim >= 3 {
            let mut d2 = vec![0.0; dim];
            d2[1] = (p2 / 2.0).sqrt();
            d2[2] = -(p2 / 2.0).sqrt();
            dephasers.push(d2);
        }
        let mut damp = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut w = -(a[i] + a[j]) / 2.0;
                for d in &dephasers {
                    w -= (d[i] - d[j]).powi(2) / 2.0;
                }
                damp[i * dim + j] = w;
            }
        }
        let mut pump = Vec::new();
        if dim >= 2 && g1 > 0.0 {
            pump.push((0, 1, g1));
        }
        if dim >= 3 && g2 > 0.0 {
            pump.push((1, 2, g2));
        }
        Dissipator { damp, pump }
    }
}

struct Rk4Scratch {
    k1: CMatrix,
    k2: CMatrix,
    k3: CMatrix,
    k4: CMatrix,
    stage: CMatrix,
    hr: CMatrix,
    rh: CMatrix,
}

impl Rk4Scratch {
    fn new(dim: usize) -> Self {
        let z = || CMatrix::zeros(dim, dim);
        Rk4Scratch { k1: z(), k2: z(), k3: z(), k4: z(), stage: z(), hr: z(), rh: z() }
    }
}

/// out = -i[h, rho] + dissipator(rho).
fn lindblad_rhs(
    h: &CMatrix,
    diss: &Dissipator,
    rho: &CMatrix,
    hr: &mut CMatrix,
    rh: &mut CMatrix,
    out: &mut CMatrix,
) {
    let d = rho.rows();
    h.mul_into(rho, hr);
    rho.mul_into(h, rh);
    for i in 0..d {
        for j in 0..d {
            let comm = hr[(i, j)] - rh[(i, j)];
            out[(i, j)] = C64::new(comm.im, -comm.re) + rho[(i, j)] * diss.damp[i * d + j];
        }
    }
    for &(to, from, rate) in &diss.pump {
        out[(to, to)] += rho[(from, from)] * rate;
    }
}

fn rk4_step(h: &CMatrix, diss: &Dissipator, dt: f64, rho: &mut CMatrix, s: &mut Rk4Scratch) {
    let half = C64::new(dt / 2.0, 0.0);

    lindblad_rhs(h, diss, rho, &mut s.hr, &mut s.rh, &mut s.k1);
    s.stage.clone_from(rho);
    s.stage.axpy(half, &s.k1);
    lindblad_rhs(h, diss, &s.stage, &mut s.hr, &mut s.rh, &mut s.k2);
    s.stage.clone_from(rho);
    s.stage.axpy(half, &s.k2);
    lindblad_rhs(h, diss, &s.stage, &mut s.hr, &mut s.rh, &mut s.k3);
    s.stage.clone_from(rho);
    s.stage.axpy(C64::new(dt, 0.0), &s.k3);
    lindblad_rhs(h, diss, &s.stage, &mut s.hr, &mut s.rh, &mut s.k4);

    rho.axpy(C64::new(dt / 6.0, 0.0), &s.k1);
    rho.axpy(C64::new(dt / 3.0, 0.0), &s.k2);
    rho.axpy(C64::new(dt / 3.0, 0.0), &s.k3);
    rho.axpy(C64::new(dt / 6.0, 0.0), &s.k4);
}

/// Integrates the master equation from `rho0` through the first `t_end_ns`
/// of `pulse`, invoking `observe` with the state at t = 0 and at every whole
/// nanosecond reached. Returns the final state.
///
/// `t_end_ns` must land on a pulse sample boundary and not exceed the pulse
/// duration. Trace drift beyond 1e-6 aborts with an integration error.
pub fn lindblad_propagate(
    dev: &DeviceParams,
    noise: &NoiseModel,
    rho0: &CMatrix,
    pulse: &ControlPulse,
    t_end_ns: f64,
    substeps_per_sample: u32,
    mut observe: impl FnMut(f64, &CMatrix),
) -> Result<CMatrix> {
    dev.validate()?;
    noise.validate()?;
    pulse.validate()?;
    if substeps_per_sample == 0 {
        return Err(Error::Config("substeps_per_sample must be positive".into()));
    }
    if rho0.rows() != dev.levels || rho0.cols() != dev.levels {
        return Err(Error::Dimension(format!(
            "state is {}x{}, device has {} levels",
            rho0.rows(),
            rho0.cols(),
            dev.levels
        )));
    }
    if !(t_end_ns.is_finite() && t_end_ns >= 0.0) || t_end_ns > pulse.duration_ns + 1e-9 {
        return Err(Error::Config(format!(
            "t_end {t_end_ns} ns outside the pulse duration {} ns",
            pulse.duration_ns
        )));
    }
    let rate = pulse.sample_rate as f64;
    let samples = (t_end_ns * rate).round();
    if (samples / rate - t_end_ns).abs() > 1e-9 {
        return Err(Error::Config(format!("t_end {t_end_ns} ns is not a sample boundary")));
    }
    let samples = samples as usize;

    let diss = Dissipator::new(dev.levels, noise);
    let dt = 1.0 / (rate * substeps_per_sample as f64);
    let mut scratch = Rk4Scratch::new(dev.levels);
    let mut rho = rho0.clone();
    observe(0.0, &rho);
    for s in 0..samples {
        let h = hamiltonian_at(dev, pulse.p_mhz[s], pulse.q_mhz[s]);
        for _ in 0..substeps_per_sample {
            rk4_step(&h, &diss, dt, &mut rho, &mut scratch);
        }
        let next = s + 1;
        if next % pulse.sample_rate as usize == 0 || next == samples {
            let drift = (rho.trace().re - 1.0).abs() + rho.trace().im.abs();
            if drift > 1e-6 {
                return Err(Error::Integration(format!(
                    "trace drifted by {drift:.3e} at t = {} ns",
                    next as f64 / rate
                )));
            }
            if next % pulse.sample_rate as usize == 0 {
                observe(next as f64 / rate, &rho);
            }
        }
    }
    Ok(rho)
}

/// Model populations after each of 1..=reps sequential applications of the
/// pulse from |0>, without confusion or sampling. One pass: the state after
/// n gates does not depend on the intermediate read-outs.
pub fn repeated_gate_model_populations(
    dev: &DeviceParams,
    noise: &NoiseModel,
    pulse: &ControlPulse,
    reps: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rho = DensityMatrix::basis_state(dev.levels, 0).matrix().clone();
    let substeps = default_substeps(pulse.sample_rate);
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        rho = lindblad_propagate(dev, noise, &rho, pulse, pulse.duration_ns, substeps, |_, _| {})?;
        out.push((0..dev.levels).map(|i| rho[(i, i)].re.max(0.0)).collect());
    }
    Ok(out)
}

/// One point of a measured population trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub t_ns: f64,
    pub populations: Vec<f64>,
}

/// Draws `shots` outcomes from an (unnormalized, clipped) probability vector
/// by a chain of binomials: an exact multinomial sample.
pub fn multinomial_counts(rng: &mut ChaCha12Rng, probs: &[f64], shots: u64) -> Vec<u64> {
    let d = probs.len();
    let clipped: Vec<f64> = probs.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut counts = vec![0u64; d];
    if total <= 0.0 || shots == 0 {
        counts[0] = shots;
        return counts;
    }
    let mut remaining = shots;
    let mut mass_left = 1.0;
    for i in 0..d - 1 {
        if remaining == 0 {
            break;
        }
        let p = clipped[i] / total;
        let cond = if mass_left > 1e-15 { (p / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let n = Binomial::new(remaining, cond)
            .expect("conditional probability is clamped")
            .sample(rng);
        counts[i] = n;
        remaining -= n;
        mass_left -= p;
    }
    counts[d - 1] = remaining;
    counts
}

/// Open-system device emulator.
///
/// `hidden_distortion` holds the ground-truth calibration parameters of the
/// control line; every executed pulse passes through the inverse transform,
/// so a pulse pre-scaled with exactly those parameters arrives undistorted.
/// The calibration loop never reads this field.
pub struct VirtualQpu {
    dev: DeviceParams,
    noise: NoiseModel,
    confusion: ConfusionMatrix,
    hidden_distortion: Option<CalibrationParams>,
    base_seed: u64,
    rng: ChaCha12Rng,
}

impl VirtualQpu {
    pub fn new(
        dev: DeviceParams,
        noise: NoiseModel,
        confusion: ConfusionMatrix,
        seed: u64,
    ) -> Result<Self> {
        dev.validate()?;
        noise.validate()?;
        if confusion.dim() != dev.levels {
            return Err(Error::Dimension(format!(
                "confusion matrix is {}-outcome, device has {} levels",
                confusion.dim(),
                dev.levels
            )));
        }
        Ok(VirtualQpu {
            dev,
            noise,
            confusion,
            hidden_distortion: None,
            base_seed: seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        })
    }

    pub fn with_hidden_distortion(mut self, truth: CalibrationParams) -> Result<Self> {
        truth.validate()?;
        self.hidden_distortion = Some(truth);
        Ok(self)
    }

    /// Same device and noise, fresh random stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        VirtualQpu {
            dev: self.dev.clone(),
            noise: self.noise,
            confusion: self.confusion.clone(),
            hidden_distortion: self.hidden_distortion,
            base_seed: seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn device(&self) -> &DeviceParams {
        &self.dev
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.confusion
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// The pulse as the qudit actually sees it.
    fn line_pulse(&self, pulse: &ControlPulse) -> Result<ControlPulse> {
        match &self.hidden_distortion {
            Some(truth) => apply_calibration(pulse, &truth.inverse()),
            None => Ok(pulse.clone()),
        }
    }

    /// Endpoint of the open evolution of `rho` under the (line-distorted)
    /// pulse. Chained calls accumulate integrator truncation at the 1e-9
    /// eigenvalue scale over microsecond evolutions; negatives within the
    /// integration budget are clipped to the nearest physical state, anything
    /// larger is a genuine failure.
    pub fn evolve_density(&self, rho: &DensityMatrix, pulse: &ControlPulse) -> Result<DensityMatrix> {
        let played = self.line_pulse(pulse)?;
        let out = lindblad_propagate(
            &self.dev,
            &self.noise,
            rho.matrix(),
            &played,
            played.duration_ns,
            default_substeps(played.sample_rate),
            |_, _| {},
        )?;
        let h = out.hermitian_part();
        let eig = hermitian_eigen(&h);
        let min = eig.values.first().copied().unwrap_or(0.0);
        if min < -1e-7 {
            return Err(Error::NonPhysicalState(format!(
                "negative eigenvalue {min:.3e} exceeds the integration budget"
            )));
        }
        let d = h.rows();
        let mut clean = CMatrix::zeros(d, d);
        let mut trace = 0.0;
        for k in 0..d {
            let lam = eig.values[k].max(0.0);
            trace += lam;
            if lam == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    clean[(i, j)] += eig.vectors[(i, k)] * eig.vectors[(j, k)].conj() * lam;
                }
            }
        }
        DensityMatrix::new(clean.scale(C64::new(1.0 / trace, 0.0)))
    }

    /// Density-matrix trajectory sampled every nanosecond (t = 0 included).
    pub fn lindblad_evolve(
        &self,
        rho0: &DensityMatrix,
        pulse: &ControlPulse,
        t_end_ns: f64,
    ) -> Result<Vec<DensityMatrix>> {
        let played = self.line_pulse(pulse)?;
        let mut snapshots = Vec::new();
        lindblad_propagate(
            &self.dev,
            &self.noise,
            rho0.matrix(),
            &played,
            t_end_ns,
            default_substeps(played.sample_rate),
            |_, rho| snapshots.push(rho.hermitian_part()),
        )?;
        snapshots.into_iter().map(DensityMatrix::new).collect()
    }

    /// Multinomial read-out of a state: populations pass through the
    /// confusion matrix, then `shots` outcomes are drawn.
    pub fn measure(&mut self, rho: &DensityMatrix, shots: u64) -> Result<Vec<u64>> {
        let probs = self.confusion.apply(&rho.populations());
        Ok(self.sample_counts(&probs, shots))
    }

    fn sample_counts(&mut self, probs: &[f64], shots: u64) -> Vec<u64> {
        multinomial_counts(&mut self.rng, probs, shots)
    }

    /// Prepares P|0><0|P^dag, applies the pulse `reps` times, measures
    /// `shots` outcomes. `reps = 0` measures the prepared state directly.
    pub fn run_and_measure(
        &mut self,
        prep: &CMatrix,
        pulse: &ControlPulse,
        reps: usize,
        shots: u64,
    ) -> Result<Vec<u64>> {
        let mut rho = DensityMatrix::basis_state(self.dev.levels, 0).conjugate(prep);
        for _ in 0..reps {
            rho = self.evolve_density(&rho, pulse)?;
        }
        self.measure(&rho, shots)
    }

    /// SPAM-corrected measured populations after each of 1..=reps gate
    /// applications, each read out with `shots` shots.
    pub fn repeated_gate_populations(
        &mut self,
        prep: &CMatrix,
        pulse: &ControlPulse,
        reps: usize,
        shots: u64,
    ) -> Result<Vec<Vec<f64>>> {
        if shots == 0 {
            return Err(Error::Config("need at least one shot per read-out".into()));
        }
        let mut rho = DensityMatrix::basis_state(self.dev.levels, 0).conjugate(prep);
        let mut out = Vec::with_capacity(reps);
        for _ in 0..reps {
            rho = self.evolve_density(&rho, pulse)?;
            let counts = self.measure(&rho, shots)?;
            let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            out.push(spam_correct(&counts, &self.confusion)?);
        }
        Ok(out)
    }

    /// Measured population trajectory: the state is sampled every
    /// nanosecond, read out through the confusion matrix with `shots` shots,
    /// and SPAM-corrected. `shots = 0` returns the exact model populations.
    pub fn trajectory_experiment(
        &mut self,
        pulse: &ControlPulse,
        initial_level: usize,
        shots: u64,
    ) -> Result<Vec<PopulationRecord>> {
        if initial_level >= self.dev.levels {
            return Err(Error::Config(format!(
                "initial level {initial_level} out of range for {} levels",
                self.dev.levels
            )));
        }
        let rho0 = DensityMatrix::basis_state(self.dev.levels, initial_level);
        let snapshots = self.lindblad_evolve(&rho0, pulse, pulse.duration_ns)?;
        let mut records = Vec::with_capacity(snapshots.len());
        for (t, rho) in snapshots.iter().enumerate() {
            let populations = if shots == 0 {
                rho.populations()
            } else {
                let counts = self.measure(rho, shots)?;
                let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                spam_correct(&counts, &self.confusion)?
            };
            records.push(PopulationRecord { t_ns: t as f64, populations });
        }
        Ok(records)
    }
}
