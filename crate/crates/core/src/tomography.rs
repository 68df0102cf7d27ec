//! Quantum process tomography: informationally complete preparation and
//! measurement settings, dataset plumbing, CPTP-constrained least-squares
//! reconstruction, and repeated-gate fidelity estimation.

use crate::bases::{operator_gram_rank, GeneralizedPauliBasis, ProjectionOperatorSet};
use crate::calibration::{spam_correct, ConfusionMatrix};
use crate::compiler::{compile, CompileRequest};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, solve, CMatrix, C64};
use crate::process::{process_fidelity, unitary_to_chi, ChiBasis, ProcessMatrix};
use crate::process::chi_to_pauli_basis;
use crate::pulse::ControlPulse;
use crate::qpu::{multinomial_counts, DensityMatrix, VirtualQpu};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// The fixed preparation states: basis kets, equal superpositions of each
/// level pair, and their +i partners (six states for a qubit). Their density
/// matrices span the full operator space.
pub struct PreparationSet {
    dim: usize,
    states: Vec<CMatrix>,
}

impl PreparationSet {
    pub fn standard(dim: usize) -> Result<Self> {
        let ket = |amps: &[(usize, C64)]| {
            let mut v = CMatrix::zeros(dim, 1);
            for &(i, z) in amps {
                v[(i, 0)] = z;
            }
            v
        };
        let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let im = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        let one = C64::new(1.0, 0.0);
        let states = match dim {
            2 => vec![
                ket(&[(0, one)]),
                ket(&[(1, one)]),
                ket(&[(0, r), (1, r)]),
                ket(&[(0, r), (1, -r)]),
                ket(&[(0, r), (1, im)]),
                ket(&[(0, r), (1, -im)]),
            ],
            3 => vec![
                ket(&[(0, one)]),
                ket(&[(1, one)]),
                ket(&[(2, one)]),
                ket(&[(0, r), (1, r)]),
                ket(&[(1, r), (2, r)]),
                ket(&[(0, r), (2, r)]),
                ket(&[(0, r), (1, im)]),
                ket(&[(1, r), (2, im)]),
                ket(&[(0, r), (2, im)]),
            ],
            d => return Err(Error::UnsupportedDimension(d)),
        };
        Ok(PreparationSet { dim, states })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &CMatrix {
        &self.states[i]
    }

    pub fn density(&self, i: usize) -> CMatrix {
        let psi = &self.states[i];
        CMatrix::from_fn(self.dim, self.dim, |a, b| psi[(a, 0)] * psi[(b, 0)].conj())
    }

    /// Rank of the density-matrix Gram; d^2 means informationally complete.
    pub fn operator_rank(&self) -> usize {
        let densities: Vec<CMatrix> = (0..self.len()).map(|i| self.density(i)).collect();
        operator_gram_rank(&densities)
    }

    /// A unitary sending |0> to the i-th state, by Householder reflection.
    /// Exact because every standard state has a real first amplitude.
    pub fn prep_unitary(&self, i: usize) -> CMatrix {
        let psi = &self.states[i];
        let d = self.dim;
        let mut v = psi.clone();
        v[(0, 0)] -= C64::new(1.0, 0.0);
        let vv: f64 = (0..d).map(|k| v[(k, 0)].norm_sqr()).sum();
        if vv < 1e-24 {
            return CMatrix::identity(d);
        }
        let u = CMatrix::from_fn(d, d, |a, b| {
            let refl = v[(a, 0)] * v[(b, 0)].conj() * (2.0 / vv);
            if a == b {
                C64::new(1.0, 0.0) - refl
            } else {
                -refl
            }
        });
        debug_assert!({
            let w = u.column(0);
            (0..d).all(|k| (w[k] - psi[(k, 0)]).norm() < 1e-12)
        });
        u
    }
}

/// Pre-measurement rotations, applied before a level read-out. The qutrit
/// uses all nine projection unitaries; the qubit the three non-identity
/// ones (the Z rotation commutes with the read-out, giving a plain Z
/// measurement).
pub fn measurement_rotations(dim: usize) -> Result<Vec<CMatrix>> {
    let set = ProjectionOperatorSet::new(dim)?;
    let ops = set.ops();
    Ok(match dim {
        2 => ops[1..].to_vec(),
        _ => ops.to_vec(),
    })
}

/// Raw counts for one (preparation, rotation) setting. Counts are stored as
/// f64 so exact forward-model datasets (fractional "counts") share the type
/// with sampled ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub prep: usize,
    pub rotation: usize,
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub dim: usize,
    pub gate_reps: usize,
    pub shots_per_setting: f64,
    pub settings: Vec<SettingRecord>,
}

impl TomographyDataset {
    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        if !(self.shots_per_setting.is_finite() && self.shots_per_setting > 0.0) {
            return Err(Error::Config(format!(
                "shots_per_setting must be positive, got {}",
                self.shots_per_setting
            )));
        }
        let n_preps = PreparationSet::standard(self.dim)?.len();
        let n_rots = measurement_rotations(self.dim)?.len();
        for (k, s) in self.settings.iter().enumerate() {
            if s.prep >= n_preps || s.rotation >= n_rots {
                return Err(Error::Config(format!(
                    "setting {k} references prep {} / rotation {} out of range",
                    s.prep, s.rotation
                )));
            }
            if s.counts.len() != self.dim {
                return Err(Error::Config(format!(
                    "setting {k} has {} counts for dimension {}",
                    s.counts.len(),
                    self.dim
                )));
            }
            if s.counts.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
                return Err(Error::Config(format!("setting {k} has invalid counts")));
            }
            let sum: f64 = s.counts.iter().sum();
            if (sum - self.shots_per_setting).abs() > 1e-6 * self.shots_per_setting.max(1.0) {
                return Err(Error::Config(format!(
                    "setting {k} counts sum to {sum}, expected {}",
                    self.shots_per_setting
                )));
            }
        }
        Ok(())
    }
}

/// How preparation and measurement rotations are realized on the QPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrepMode {
    /// Exact unitaries, applied instantaneously.
    Ideal,
    /// Each prep and rotation unitary is synthesized as a pulse of the given
    /// duration and executed through the device like any other drive.
    Compiled { duration_ns: f64, seed: u64 },
}

fn compiled_pulse(
    target: &CMatrix,
    dev: &crate::device::DeviceParams,
    duration_ns: f64,
    seed: u64,
) -> Result<ControlPulse> {
    let mut req = CompileRequest::new(target.clone(), duration_ns);
    req.seed = seed;
    Ok(compile(&req, dev)?.pulse)
}

/// Runs the full process-tomography experiment for a gate pulse applied
/// `gate_reps` times: every preparation, every rotation, `shots` read-outs
/// each. `shots = 0` records exact measured frequencies (still including
/// confusion) instead of sampled counts.
pub fn qpt_experiment(
    qpu: &mut VirtualQpu,
    gate_pulse: &ControlPulse,
    gate_reps: usize,
    shots: u64,
    mode: &PrepMode,
) -> Result<TomographyDataset> {
    let d = qpu.device().levels;
    let preps = PreparationSet::standard(d)?;
    let rots = measurement_rotations(d)?;

    let mut prep_pulses = Vec::new();
    let mut rot_pulses = Vec::new();
    if let PrepMode::Compiled { duration_ns, seed } = *mode {
        let dev = qpu.device().clone();
        for i in 0..preps.len() {
            prep_pulses.push(compiled_pulse(&preps.prep_unitary(i), &dev, duration_ns, seed + i as u64)?);
        }
        for (b, a) in rots.iter().enumerate() {
            rot_pulses.push(compiled_pulse(a, &dev, duration_ns, seed + 100 + b as u64)?);
        }
    }

    let mut settings = Vec::with_capacity(preps.len() * rots.len());
    for i in 0..preps.len() {
        let mut rho = match mode {
            PrepMode::Ideal => DensityMatrix::pure(preps.state(i))?,
            PrepMode::Compiled { .. } => {
                let ground = DensityMatrix::basis_state(d, 0);
                qpu.evolve_density(&ground, &prep_pulses[i])?
            }
        };
        for _ in 0..gate_reps {
            rho = qpu.evolve_density(&rho, gate_pulse)?;
        }
        for (b, a) in rots.iter().enumerate() {
            let rho_b = match mode {
                PrepMode::Ideal => rho.conjugate(a),
                PrepMode::Compiled { .. } => qpu.evolve_density(&rho, &rot_pulses[b])?,
            };
            let counts: Vec<f64> = if shots == 0 {
                qpu.confusion()
                    .apply(&rho_b.populations())
                    .iter()
                    .map(|&p| p.max(0.0))
                    .collect()
            } else {
                qpu.measure(&rho_b, shots)?.iter().map(|&c| c as f64).collect()
            };
            settings.push(SettingRecord { prep: i, rotation: b, counts });
        }
    }
    let shots_per_setting = if shots == 0 { 1.0 } else { shots as f64 };
    // Exact frequencies can sum slightly off 1 after clipping; renormalize.
    let mut data = TomographyDataset { dim: d, gate_reps, shots_per_setting, settings };
    if shots == 0 {
        for s in data.settings.iter_mut() {
            let sum: f64 = s.counts.iter().sum();
            if sum > 0.0 {
                for c in s.counts.iter_mut() {
                    *c /= sum;
                }
            }
        }
    }
    data.validate()?;
    Ok(data)
}

/// Exact forward-model dataset for a known channel: the measured frequencies
/// every setting would converge to with infinite shots.
pub fn exact_dataset(chi: &ProcessMatrix) -> Result<TomographyDataset> {
    forward_dataset(chi, None, None)
}

/// Finite-shot dataset sampled from a known channel, optionally corrupted by
/// readout confusion.
pub fn sampled_dataset(
    chi: &ProcessMatrix,
    shots: u64,
    confusion: Option<&ConfusionMatrix>,
    seed: u64,
) -> Result<TomographyDataset> {
    if shots == 0 {
        return Err(Error::Config("sampled dataset needs at least one shot".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    forward_dataset(chi, confusion, Some((shots, &mut rng)))
}

fn forward_dataset(
    chi: &ProcessMatrix,
    confusion: Option<&ConfusionMatrix>,
    sampling: Option<(u64, &mut ChaCha12Rng)>,
) -> Result<TomographyDataset> {
    let d = chi.dim;
    if let Some(c) = confusion {
        if c.dim() != d {
            return Err(Error::Dimension(format!(
                "confusion is {}-outcome for dimension {d}",
                c.dim()
            )));
        }
    }
    let preps = PreparationSet::standard(d)?;
    let rots = measurement_rotations(d)?;
    let mut settings = Vec::with_capacity(preps.len() * rots.len());
    let mut sampling = sampling;
    for i in 0..preps.len() {
        let out = chi.apply(&preps.density(i))?;
        for (b, a) in rots.iter().enumerate() {
            let rotated = a.mul(&out).mul(&a.dagger());
            let mut probs: Vec<f64> = (0..d).map(|o| rotated[(o, o)].re.max(0.0)).collect();
            if let Some(c) = confusion {
                probs = c.apply(&probs);
            }
            let counts = match sampling.as_mut() {
                Some((shots, rng)) => {
                    multinomial_counts(rng, &probs, *shots).iter().map(|&c| c as f64).collect()
                }
                None => {
                    let sum: f64 = probs.iter().sum();
                    probs.iter().map(|&p| p / sum).collect()
                }
            };
            settings.push(SettingRecord { prep: i, rotation: b, counts });
        }
    }
    let shots_per_setting = match &sampling {
        Some((shots, _)) => *shots as f64,
        None => 1.0,
    };
    let data = TomographyDataset { dim: d, gate_reps: 1, shots_per_setting, settings };
    data.validate()?;
    Ok(data)
}

struct Row {
    u: Vec<C64>,
    f: f64,
}

/// Builds one least-squares row per (setting, outcome): the predicted
/// probability is u^dag chi u with u[m] = conj(<o| A_b B_m |psi_i>).
fn design_rows(
    data: &TomographyDataset,
    frequencies: &[Vec<f64>],
    preps: &PreparationSet,
    rots: &[CMatrix],
    basis_ops: &[CMatrix],
) -> Vec<Row> {
    let d = data.dim;
    let d2 = d * d;
    // stacked[i]: d x d2 matrix whose column m is B_m |psi_i>.
    let stacked: Vec<CMatrix> = (0..preps.len())
        .map(|i| {
            let mut s = CMatrix::zeros(d, d2);
            for (m, op) in basis_ops.iter().enumerate() {
                let col = op.mul(preps.state(i));
                s.set_column(m, &col.column(0));
            }
            s
        })
        .collect();
    let mut rows = Vec::with_capacity(data.settings.len() * d);
    for (k, setting) in data.settings.iter().enumerate() {
        let t = rots[setting.rotation].mul(&stacked[setting.prep]);
        for o in 0..d {
            let u: Vec<C64> = (0..d2).map(|m| t[(o, m)].conj()).collect();
            rows.push(Row { u, f: frequencies[k][o] });
        }
    }
    rows
}

/// Rank of the design over the real space of Hermitian chi matrices.
fn design_rank(rows: &[Row], d2: usize) -> usize {
    let d4 = d2 * d2;
    let mut gram = CMatrix::zeros(d4, d4);
    let mut v = vec![0.0; d4];
    for row in rows {
        // Real coordinates of the Hermitian matrix u u^dag.
        let mut idx = 0;
        for m in 0..d2 {
            v[idx] = (row.u[m] * row.u[m].conj()).re;
            idx += 1;
        }
        let s2 = std::f64::consts::SQRT_2;
        for m in 0..d2 {
            for n in (m + 1)..d2 {
                let z = row.u[m] * row.u[n].conj();
                v[idx] = s2 * z.re;
                v[idx + 1] = s2 * z.im;
                idx += 2;
            }
        }
        for a in 0..d4 {
            if v[a] == 0.0 {
                continue;
            }
            for b in 0..d4 {
                gram[(a, b)] += C64::new(v[a] * v[b], 0.0);
            }
        }
    }
    let eig = hermitian_eigen(&gram);
    let max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    eig.values.iter().filter(|&&w| w > 1e-10 * max).count()
}

fn cost_and_gradient(chi: &CMatrix, rows: &[Row], grad: &mut CMatrix) -> f64 {
    let d2 = chi.rows();
    for a in 0..d2 {
        for b in 0..d2 {
            grad[(a, b)] = C64::new(0.0, 0.0);
        }
    }
    let mut cost = 0.0;
    let mut t = vec![C64::new(0.0, 0.0); d2];
    for row in rows {
        for m in 0..d2 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..d2 {
                acc += chi[(m, n)] * row.u[n];
            }
            t[m] = acc;
        }
        let p: f64 = (0..d2).map(|m| (row.u[m].conj() * t[m]).re).sum();
        let delta = p - row.f;
        cost += delta * delta;
        let w = 2.0 * delta;
        for m in 0..d2 {
            let um = row.u[m] * w;
            for n in 0..d2 {
                grad[(m, n)] += um * row.u[n].conj();
            }
        }
    }
    cost
}

/// Affine projection onto trace-preserving chi matrices.
struct TpProjector {
    m: CMatrix,
    mm: CMatrix,
    b: CMatrix,
    d2: usize,
}

impl TpProjector {
    fn new(basis_ops: &[CMatrix], dim: usize) -> Self {
        let d2 = dim * dim;
        let d4 = d2 * d2;
        let mut m = CMatrix::zeros(dim * dim, d4);
        for mi in 0..d2 {
            for ni in 0..d2 {
                let prod = basis_ops[ni].dagger().mul(&basis_ops[mi]);
                for p in 0..dim {
                    for q in 0..dim {
                        m[(p * dim + q, mi * d2 + ni)] = prod[(p, q)];
                    }
                }
            }
        }
        let mm = m.mul(&m.dagger());
        let mut b = CMatrix::zeros(dim * dim, 1);
        for p in 0..dim {
            b[(p * dim + p, 0)] = C64::new(1.0, 0.0);
        }
        TpProjector { m, mm, b, d2 }
    }

    fn project(&self, chi: &CMatrix) -> CMatrix {
        let d2 = self.d2;
        let d4 = d2 * d2;
        let mut x = CMatrix::zeros(d4, 1);
        for mi in 0..d2 {
            for ni in 0..d2 {
                x[(mi * d2 + ni, 0)] = chi[(mi, ni)];
            }
        }
        let mut r = self.m.mul(&x);
        r.axpy(C64::new(-1.0, 0.0), &self.b);
        let lam = solve(&self.mm, &r).expect("TP Gram matrix is invertible for a basis");
        let corr = self.m.dagger().mul(&lam);
        x.axpy(C64::new(-1.0, 0.0), &corr);
        let out = CMatrix::from_fn(d2, d2, |mi, ni| x[(mi * d2 + ni, 0)]);
        out.hermitian_part()
    }
}

fn psd_project(x: &CMatrix) -> CMatrix {
    let h = x.hermitian_part();
    let eig = hermitian_eigen(&h);
    let d = h.rows();
    let v = &eig.vectors;
    CMatrix::from_fn(d, d, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..d {
            let lam = eig.values[k];
            if lam > 0.0 {
                acc += v[(i, k)] * v[(j, k)].conj() * lam;
            }
        }
        acc
    })
}

/// Dykstra alternation between the PSD cone and the TP affine subspace.
/// Returns a matrix that is exactly TP and PSD to within 1e-8. Convergence
/// slows near rank-deficient targets (the cone boundary is tangent to the
/// affine subspace there), so the round cap is deliberately generous.
fn project_cptp(input: &CMatrix, tp: &TpProjector) -> CMatrix {
    let mut x = input.hermitian_part();
    let d2 = x.rows();
    let mut p = CMatrix::zeros(d2, d2);
    let mut q = CMatrix::zeros(d2, d2);
    for _ in 0..25_000 {
        let mut xp = x.clone();
        xp.axpy(C64::new(1.0, 0.0), &p);
        let y = psd_project(&xp);
        p = xp.sub(&y);
        let mut yq = y.clone();
        yq.axpy(C64::new(1.0, 0.0), &q);
        let z = tp.project(&yq);
        q = yq.sub(&z);
        let gap = z.max_abs_diff(&y);
        x = z;
        if gap < 1e-8 {
            break;
        }
    }
    x
}

/// Orthonormal basis (Frobenius inner product) for Hermitian n x n matrices:
/// diagonal units, then symmetric and antisymmetric off-diagonal pairs.
fn herm_basis(n: usize) -> Vec<CMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        let mut e = CMatrix::zeros(n, n);
        e[(a, a)] = C64::new(1.0, 0.0);
        out.push(e);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let mut e = CMatrix::zeros(n, n);
            e[(a, b)] = C64::new(s, 0.0);
            e[(b, a)] = C64::new(s, 0.0);
            out.push(e);
            let mut e = CMatrix::zeros(n, n);
            e[(a, b)] = C64::new(0.0, s);
            e[(b, a)] = C64::new(0.0, -s);
            out.push(e);
        }
    }
    out
}

/// Global minimizer of the least-squares cost over Hermitian chi subject to
/// the TP constraint alone, via the KKT system in a real Hermitian
/// parametrization. Ignores the PSD cone; the caller projects afterwards.
/// With full-rank designs this is strictly convex, so the solution is unique.
fn tp_least_squares(rows: &[Row], tp: &TpProjector, dim: usize) -> Option<CMatrix> {
    let d2 = dim * dim;
    let dh = d2 * d2;
    let ch = dim * dim;
    let eb = herm_basis(d2);
    let fb = herm_basis(dim);

    // N[k][j] = u_k^dag E_j u_k, real because E_j is Hermitian.
    let mut n_mat = vec![vec![0.0; dh]; rows.len()];
    for (k, row) in rows.iter().enumerate() {
        for (j, e) in eb.iter().enumerate() {
            let t = e.mul_vec(&row.u);
            n_mat[k][j] = row.u.iter().zip(&t).map(|(u, t)| (u.conj() * t).re).sum();
        }
    }
    let mut a = vec![vec![0.0; dh]; dh];
    let mut rt = vec![0.0; dh];
    for (k, row) in rows.iter().enumerate() {
        for j1 in 0..dh {
            let nj1 = n_mat[k][j1];
            if nj1 == 0.0 {
                continue;
            }
            rt[j1] += nj1 * row.f;
            for j2 in 0..dh {
                a[j1][j2] += nj1 * n_mat[k][j2];
            }
        }
    }

    // Constraint coordinates: C[i][j] = <F_i, T(E_j)>, b[i] = <F_i, I>.
    let eye = CMatrix::identity(dim);
    let mut c = vec![vec![0.0; dh]; ch];
    let mut b = vec![0.0; ch];
    for (i, f) in fb.iter().enumerate() {
        b[i] = re_inner(f, &eye);
    }
    for (j, e) in eb.iter().enumerate() {
        let mut x = CMatrix::zeros(dh, 1);
        for mi in 0..d2 {
            for ni in 0..d2 {
                x[(mi * d2 + ni, 0)] = e[(mi, ni)];
            }
        }
        let tv = tp.m.mul(&x);
        let tj = CMatrix::from_fn(dim, dim, |p, q| tv[(p * dim + q, 0)]);
        for (i, f) in fb.iter().enumerate() {
            c[i][j] = re_inner(f, &tj);
        }
    }

    let n_tot = dh + ch;
    let mut kkt = CMatrix::zeros(n_tot, n_tot);
    let mut rhs = CMatrix::zeros(n_tot, 1);
    for j1 in 0..dh {
        for j2 in 0..dh {
            kkt[(j1, j2)] = C64::new(2.0 * a[j1][j2], 0.0);
        }
        rhs[(j1, 0)] = C64::new(2.0 * rt[j1], 0.0);
    }
    for i in 0..ch {
        for j in 0..dh {
            kkt[(dh + i, j)] = C64::new(c[i][j], 0.0);
            kkt[(j, dh + i)] = C64::new(c[i][j], 0.0);
        }
        rhs[(dh + i, 0)] = C64::new(b[i], 0.0);
    }
    let sol = solve(&kkt, &rhs).ok()?;
    let mut chi = CMatrix::zeros(d2, d2);
    for (j, e) in eb.iter().enumerate() {
        chi.axpy(C64::new(sol[(j, 0)].re, 0.0), e);
    }
    Some(chi.hermitian_part())
}

/// Result of a CPTP-constrained reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub chi: ProcessMatrix,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)].conj() * b[(i, j)]).re;
        }
    }
    acc
}

/// Projected-gradient reconstruction of the process matrix from tomography
/// data: least-squares cost over SPAM-corrected frequencies, Barzilai-Borwein
/// step lengths with halving on non-decrease, every iterate projected back
/// onto the CPTP set. Stops when an accepted step improves the cost by less
/// than 1e-10, or after 5000 iterations.
pub fn pgdb_reconstruct(
    data: &TomographyDataset,
    confusion: Option<&ConfusionMatrix>,
) -> Result<Reconstruction> {
    data.validate()?;
    let d = data.dim;
    let d2 = d * d;
    let preps = PreparationSet::standard(d)?;
    let rots = measurement_rotations(d)?;
    let proj_set = ProjectionOperatorSet::new(d)?;
    let basis_ops = proj_set.ops().to_vec();

    let mut frequencies = Vec::with_capacity(data.settings.len());
    for s in &data.settings {
        let f = match confusion {
            Some(c) => spam_correct(&s.counts, c)?,
            None => {
                let total: f64 = s.counts.iter().sum();
                s.counts.iter().map(|&c| c / total).collect()
            }
        };
        frequencies.push(f);
    }

    let rows = design_rows(data, &frequencies, &preps, &rots, &basis_ops);
    let rank = design_rank(&rows, d2);
    let need = d2 * d2;
    if rank < need {
        return Err(Error::RankDeficientDesign { rank, need });
    }

    let tp = TpProjector::new(&basis_ops, d);
    let mut chi = CMatrix::identity(d2).scale(C64::new(1.0 / d2 as f64, 0.0));
    let mut grad = CMatrix::zeros(d2, d2);
    let mut cand_grad = CMatrix::zeros(d2, d2);
    let mut cost = cost_and_gradient(&chi, &rows, &mut grad);

    // Warm start: the TP-only least-squares minimizer, projected to CPTP and
    // adopted when it beats the maximally mixed start. On exact channel data
    // that point is already the global optimum, so the descent loop below
    // terminates at machine-level cost instead of crawling through the
    // first-order tail.
    if let Some(ls) = tp_least_squares(&rows, &tp, d) {
        let cand = project_cptp(&ls, &tp);
        let cand_cost = cost_and_gradient(&cand, &rows, &mut cand_grad);
        if cand_cost < cost {
            chi = cand;
            std::mem::swap(&mut grad, &mut cand_grad);
            cost = cand_cost;
        }
    }

    // Conservative first step from the Lipschitz bound 2 sum ||u||^4.
    let lipschitz: f64 =
        2.0 * rows.iter().map(|r| r.u.iter().map(|z| z.norm_sqr()).sum::<f64>().powi(2)).sum::<f64>();
    let mut alpha = 1.0 / lipschitz.max(1e-12);

    let mut iterations = 0;
    let mut converged = false;
    'outer: while iterations < 5000 {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let mut step = chi.clone();
            step.axpy(C64::new(-alpha, 0.0), &grad);
            let cand = project_cptp(&step, &tp);
            let cand_cost = cost_and_gradient(&cand, &rows, &mut cand_grad);
            if cand_cost <= cost {
                let s = cand.sub(&chi);
                let y = cand_grad.sub(&grad);
                let ss = re_inner(&s, &s);
                let sy = re_inner(&s, &y);
                alpha = if sy > 1e-18 { (ss / sy).clamp(1e-10, 1e10) } else { alpha * 2.0 };
                let improvement = cost - cand_cost;
                chi = cand;
                std::mem::swap(&mut grad, &mut cand_grad);
                cost = cand_cost;
                accepted = true;
                if improvement < 1e-10 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                break;
            }
        }
        if !accepted {
            // No step of any length improves the cost: fully converged.
            converged = true;
            break;
        }
    }

    Ok(Reconstruction {
        chi: ProcessMatrix::new(chi, ChiBasis::Projection, d)?,
        cost,
        iterations,
        converged,
    })
}

/// Fidelity of n repeated gate applications, reported per gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RepeatedGatePoint {
    pub reps: usize,
    pub process_fidelity: f64,
    pub per_gate_fidelity: f64,
}

/// Tomographs the n-fold repetition of a gate pulse for each n in
/// `reps_list` and reports F(n) against the ideal target^n, plus the
/// per-gate figure F(n)^(1/n). Read-out is SPAM-corrected with the QPU's own
/// confusion matrix.
pub fn repeated_gate_fidelity(
    qpu: &mut VirtualQpu,
    gate_pulse: &ControlPulse,
    target: &CMatrix,
    reps_list: &[usize],
    shots: u64,
) -> Result<Vec<RepeatedGatePoint>> {
    if reps_list.iter().any(|&n| n == 0) {
        return Err(Error::Config("repetition counts must be at least 1".into()));
    }
    let confusion = qpu.confusion().clone();
    let mut out = Vec::with_capacity(reps_list.len());
    for &n in reps_list {
        let data = qpt_experiment(qpu, gate_pulse, n, shots, &PrepMode::Ideal)?;
        let rec = pgdb_reconstruct(&data, Some(&confusion))?;
        let mut un = CMatrix::identity(target.rows());
        for _ in 0..n {
            un = target.mul(&un);
        }
        let ideal = unitary_to_chi(&un)?;
        let f = process_fidelity(&rec.chi, &ideal)?;
        out.push(RepeatedGatePoint {
            reps: n,
            process_fidelity: f,
            per_gate_fidelity: f.powf(1.0 / n as f64),
        });
    }
    Ok(out)
}

/// One display entry of a chi matrix in the orthogonal Pauli basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiTableEntry {
    pub row: String,
    pub col: String,
    pub magnitude: f64,
    pub phase: f64,
}

/// Magnitude/phase table of a process matrix in the generalized Pauli basis,
/// row-major. Phases of entries below 1e-12 are reported as zero.
pub fn chi_pauli_table(chi: &ProcessMatrix) -> Result<Vec<ChiTableEntry>> {
    let p = chi_to_pauli_basis(chi)?;
    let basis = GeneralizedPauliBasis::new(chi.dim)?;
    let labels = basis.labels();
    let d2 = chi.dim * chi.dim;
    let mut entries = Vec::with_capacity(d2 * d2);
    for i in 0..d2 {
        for j in 0..d2 {
            let z = p.matrix[(i, j)];
            let magnitude = z.norm();
            let phase = if magnitude < 1e-12 { 0.0 } else { z.arg() };
            entries.push(ChiTableEntry {
                row: labels[i].clone(),
                col: labels[j].clone(),
                magnitude,
                phase,
            });
        }
    }
    Ok(entries)
}
