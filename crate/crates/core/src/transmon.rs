//! Rotating-frame transmon model: Hamiltonian assembly and closed-system
//! propagation of piecewise-constant pulses.
//!
//! Internal units are rad/ns throughout. All unit conversions live in this
//! module and nowhere else.

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{exp_i_hermitian, CMatrix, C64};
use crate::pulse::ControlPulse;

/// GHz -> rad/ns.
pub const GHZ_TO_RAD_NS: f64 = 2.0 * std::f64::consts::PI;

/// Drive amplitude (MHz) -> rad/ns coupling on (a + a^dag).
///
/// Amplitudes are Rabi frequencies in cyclic units: a constant resonant
/// drive of Omega MHz cycles the 0-1 population at Omega^-1 us, so a pi/2
/// pulse takes 1/(4 Omega) us. That convention pins the coupling at
/// 2 pi * (p/2) * 1e-3, not 2 pi * p * 1e-3.
pub const MHZ_DRIVE_TO_RAD_NS: f64 = std::f64::consts::PI * 1e-3;

/// Truncated lowering operator: a|n> = sqrt(n)|n-1>.
pub fn lowering_operator(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Static part of the rotating-frame Hamiltonian: the anharmonic ladder
/// 0.5 * (2 pi alpha) * a^dag a^dag a a, i.e. diag(0, 0, 2 pi alpha) for a
/// qutrit.
pub fn anharmonic_hamiltonian(dev: &DeviceParams) -> CMatrix {
    let alpha = dev.anharmonicity_ghz() * GHZ_TO_RAD_NS;
    CMatrix::from_fn(dev.levels, dev.levels, |i, j| {
        if i == j {
            let n = i as f64;
            C64::new(0.5 * alpha * n * (n - 1.0), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Unit drive operators per MHz of amplitude, in rad/ns:
/// (coupling * (a + a^dag), coupling * i (a - a^dag)).
pub fn drive_operators(dim: usize) -> (CMatrix, CMatrix) {
    let a = lowering_operator(dim);
    let ad = a.dagger();
    let c = C64::new(MHZ_DRIVE_TO_RAD_NS, 0.0);
    let xp = a.add(&ad).scale(c);
    let xq = a.sub(&ad).scale(C64::new(0.0, MHZ_DRIVE_TO_RAD_NS));
    (xp, xq)
}

/// Rotating-frame Hamiltonian at one sample, in rad/ns.
pub fn hamiltonian_at(dev: &DeviceParams, p_mhz: f64, q_mhz: f64) -> CMatrix {
    let mut h = anharmonic_hamiltonian(dev);
    let (xp, xq) = drive_operators(dev.levels);
    h.axpy(C64::new(p_mhz, 0.0), &xp);
    h.axpy(C64::new(q_mhz, 0.0), &xq);
    h
}

/// Closed-system propagator of a piecewise-constant pulse:
/// U = prod_k exp(-i H_k dt), each factor evaluated by exact
/// eigendecomposition (no small-angle approximation).
pub fn propagate_closed(dev: &DeviceParams, pulse: &ControlPulse) -> Result<CMatrix> {
    pulse.validate()?;
    if dev.levels < 2 {
        return Err(Error::UnsupportedDimension(dev.levels));
    }
    let dt = 1.0 / pulse.sample_rate as f64;
    let mut u = CMatrix::identity(dev.levels);
    for k in 0..pulse.len() {
        let h = hamiltonian_at(dev, pulse.p_mhz[k], pulse.q_mhz[k]);
        let step = exp_i_hermitian(&h, dt);
        u = step.mul(&u);
    }
    Ok(u)
}

/// Trace overlap fidelity |Tr(U^dag V)|^2 / d^2 between two unitaries.
pub fn closed_gate_fidelity(u: &CMatrix, v: &CMatrix) -> f64 {
    let d = u.rows() as f64;
    u.dagger().trace_of_product(v).norm_sqr() / (d * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_random_unitary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn two_level() -> DeviceParams {
        DeviceParams { levels: 2, ..DeviceParams::qudit() }
    }

    #[test]
    fn zero_drive_hamiltonian_is_the_anharmonic_ladder() {
        let dev = DeviceParams::qudit();
        let h = hamiltonian_at(&dev, 0.0, 0.0);
        let alpha_rad = -0.209 * GHZ_TO_RAD_NS;
        assert!(h.max_abs() > 0.0);
        assert!((h[(0, 0)].norm()) < 1e-15);
        assert!((h[(1, 1)].norm()) < 1e-15);
        assert!((h[(2, 2)].re - alpha_rad).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(h[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_with_sqrt2_ladder_coupling() {
        let dev = DeviceParams::qudit();
        let h = hamiltonian_at(&dev, 3.0, -1.5);
        assert!(h.is_hermitian(1e-15));
        // 1-2 matrix element carries the sqrt(2) bosonic enhancement.
        let r = h[(1, 2)].norm() / h[(0, 1)].norm();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rabi_oracle_pins_the_frequency_units() {
        // Omega MHz of constant resonant drive for 1/(4 Omega * 1e-3) ns is a
        // pi/2 rotation: |U00|^2 = 1/2.
        let dev = two_level();
        for omega in [2.0f64, 10.0, 25.0] {
            let t_ns = 1.0 / (4.0 * omega * 1e-3);
            let rate = 64u32;
            let n = (t_ns * rate as f64).round() as usize;
            let pulse = ControlPulse::new(rate, vec![omega; n], vec![0.0; n]).unwrap();
            let u = propagate_closed(&dev, &pulse).unwrap();
            assert!(
                (u[(0, 0)].norm_sqr() - 0.5).abs() < 1e-3,
                "Omega = {omega}: |U00|^2 = {}",
                u[(0, 0)].norm_sqr()
            );
            // Symmetric transfer either way.
            assert!((u[(0, 1)].norm() - u[(1, 0)].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pulse_only_winds_the_anharmonic_phase() {
        let dev = DeviceParams::qudit();
        let t = 220.0;
        let n = (t * 64.0) as usize;
        let pulse = ControlPulse::new(64, vec![0.0; n], vec![0.0; n]).unwrap();
        let u = propagate_closed(&dev, &pulse).unwrap();
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((u[(1, 1)].norm() - 1.0).abs() < 1e-12);
        let expect = C64::from_polar(1.0, -dev.anharmonicity_ghz() * GHZ_TO_RAD_NS * t);
        assert!((u[(2, 2)] - expect).norm() < 1e-9);
    }

    #[test]
    fn propagators_are_unitary_for_random_pulses() {
        let dev = DeviceParams::qudit();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(16..192);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let pulse = ControlPulse::new(64, p, q).unwrap();
            let u = propagate_closed(&dev, &pulse).unwrap();
            assert!(u.unitarity_residual() < 1e-10);
        }
    }

    #[test]
    fn sampling_a_smooth_pulse_twice_as_finely_barely_moves_the_propagator() {
        // Smooth baseband Gaussian; the piecewise-constant representation at
        // 64 samples/ns is already converged, so halving the step must not
        // move the result by more than 1e-6.
        let dev = DeviceParams::qudit();
        let gauss = |rate: u32| {
            let t_total = 50.0;
            let n = (t_total * rate as f64) as usize;
            let (mut p, q) = (Vec::with_capacity(n), vec![0.0; n]);
            for k in 0..n {
                let t = (k as f64 + 0.5) / rate as f64;
                let x = (t - t_total / 2.0) / 8.0;
                p.push(5.0 * (-0.5 * x * x).exp());
            }
            ControlPulse::new(rate, p, q).unwrap()
        };
        let u64x = propagate_closed(&dev, &gauss(64)).unwrap();
        let u128x = propagate_closed(&dev, &gauss(128)).unwrap();
        assert!(u64x.max_abs_diff(&u128x) < 1e-6);
    }

    #[test]
    fn fidelity_is_one_for_identical_and_overlap_for_random_unitaries() {
        let u = haar_random_unitary(3, 5);
        assert!((closed_gate_fidelity(&u, &u) - 1.0).abs() < 1e-12);
        let v = haar_random_unitary(3, 6);
        let f = closed_gate_fidelity(&u, &v);
        assert!((0.0..=1.0).contains(&f));
        let direct = u.dagger().trace_of_product(&v).norm_sqr() / 9.0;
        assert!((f - direct).abs() < 1e-14);
    }
}
