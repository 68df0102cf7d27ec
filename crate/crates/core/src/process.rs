//! Process (chi) matrices and the fidelity between quantum channels.
//!
//! A channel is written as eps(rho) = sum_mn chi[m][n] B_m rho B_n^dag for an
//! operator basis {B_m}. Two bases appear in practice: the tomography
//! projection set (A_m, not mutually orthogonal) in which reconstructions are
//! performed, and the orthogonal generalized Pauli basis used for display and
//! for fidelity evaluation.

use crate::bases::{GeneralizedPauliBasis, ProjectionOperatorSet};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, solve, sqrt_psd, CMatrix, C64, ZERO};
use serde::{Deserialize, Serialize};

/// Which operator basis a chi matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiBasis {
    /// The tomography projection unitaries A_m (A_0 = I, A_m = exp(-i pi/4 g_m)).
    Projection,
    /// The orthogonal generalized Pauli basis (Tr(P_j^dag P_k) = d delta_jk).
    GeneralizedPauli,
}

/// Process matrix together with its basis tag and qudit dimension.
#[derive(Debug, Clone)]
pub struct ProcessMatrix {
    pub matrix: CMatrix,
    pub basis: ChiBasis,
    pub dim: usize,
}

impl ProcessMatrix {
    pub fn new(matrix: CMatrix, basis: ChiBasis, dim: usize) -> Result<Self> {
        if matrix.rows() != dim * dim || matrix.cols() != dim * dim {
            return Err(Error::Dimension(format!(
                "chi for dimension {dim} must be {0}x{0}, got {1}x{2}",
                dim * dim,
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(ProcessMatrix { matrix, basis, dim })
    }

    /// The basis operators this chi is expressed in.
    pub fn basis_ops(&self) -> Result<Vec<CMatrix>> {
        Ok(match self.basis {
            ChiBasis::Projection => ProjectionOperatorSet::new(self.dim)?.ops().to_vec(),
            ChiBasis::GeneralizedPauli => GeneralizedPauliBasis::new(self.dim)?.ops().to_vec(),
        })
    }

    /// Applies the channel to a state: sum_mn chi[m][n] B_m rho B_n^dag.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.rows() != self.dim || rho.cols() != self.dim {
            return Err(Error::Dimension(format!(
                "state is {}x{}, channel acts on dimension {}",
                rho.rows(),
                rho.cols(),
                self.dim
            )));
        }
        let ops = self.basis_ops()?;
        let n = ops.len();
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for m in 0..n {
            let left = ops[m].mul(rho);
            for k in 0..n {
                let w = self.matrix[(m, k)];
                if w == ZERO {
                    continue;
                }
                out.axpy(w, &left.mul(&ops[k].dagger()));
            }
        }
        Ok(out)
    }

    /// Trace-preservation residual ||sum_mn chi[m][n] B_n^dag B_m - I||_max.
    pub fn tp_residual(&self) -> Result<f64> {
        let ops = self.basis_ops()?;
        let n = ops.len();
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for m in 0..n {
            for k in 0..n {
                let w = self.matrix[(m, k)];
                if w == ZERO {
                    continue;
                }
                acc.axpy(w, &ops[k].dagger().mul(&ops[m]));
            }
        }
        Ok(acc.max_abs_diff(&CMatrix::identity(self.dim)))
    }

    /// Smallest eigenvalue of the Hermitian part; >= -tol for a CP channel.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = hermitian_eigen(&self.matrix.hermitian_part());
        eig.values[0]
    }
}

/// Expands an operator in the projection basis: coefficients c with
/// M = sum_m c[m] A_m. Unique because the A_m form an operator basis.
fn expand_in_projection_basis(m: &CMatrix, set: &ProjectionOperatorSet) -> Result<Vec<C64>> {
    let d2 = set.dim() * set.dim();
    let b = set.vectorized_basis();
    let mut rhs = CMatrix::zeros(d2, 1);
    for (i, z) in m.vectorize().into_iter().enumerate() {
        rhs[(i, 0)] = z;
    }
    let x = solve(&b, &rhs)?;
    Ok((0..d2).map(|i| x[(i, 0)]).collect())
}

/// chi of the unitary channel rho -> U rho U^dag, in the projection basis.
/// The result is rank one: chi = u u^dag where U = sum_m u[m] A_m.
pub fn unitary_to_chi(u: &CMatrix) -> Result<ProcessMatrix> {
    let residual = u.unitarity_residual();
    const TOL: f64 = 1e-8;
    if residual > TOL {
        return Err(Error::NotUnitary { residual, tolerance: TOL });
    }
    kraus_to_chi(std::slice::from_ref(u))
}

/// chi of the channel with the given Kraus operators, in the projection
/// basis: chi = sum_i k_i k_i^dag with K_i = sum_m k_i[m] A_m.
pub fn kraus_to_chi(kraus: &[CMatrix]) -> Result<ProcessMatrix> {
    let dim = kraus
        .first()
        .ok_or_else(|| Error::Dimension("empty Kraus family".into()))?
        .rows();
    let set = ProjectionOperatorSet::new(dim)?;
    let d2 = dim * dim;
    let mut chi = CMatrix::zeros(d2, d2);
    for k in kraus {
        if k.rows() != dim || k.cols() != dim {
            return Err(Error::Dimension("Kraus operators of mixed dimensions".into()));
        }
        let coeff = expand_in_projection_basis(k, &set)?;
        for m in 0..d2 {
            for n in 0..d2 {
                chi[(m, n)] += coeff[m] * coeff[n].conj();
            }
        }
    }
    ProcessMatrix::new(chi, ChiBasis::Projection, dim)
}

/// Change-of-basis matrix C with chi_pauli = C chi_proj C^dag:
/// C[k][m] = Tr(P_k^dag A_m) / d.
fn projection_to_pauli_map(dim: usize) -> Result<CMatrix> {
    let proj = ProjectionOperatorSet::new(dim)?;
    let pauli = GeneralizedPauliBasis::new(dim)?;
    let d2 = dim * dim;
    let mut c = CMatrix::zeros(d2, d2);
    for (k, p) in pauli.ops().iter().enumerate() {
        let pd = p.dagger();
        for (m, a) in proj.ops().iter().enumerate() {
            c[(k, m)] = pd.trace_of_product(a) / C64::new(dim as f64, 0.0);
        }
    }
    Ok(c)
}

/// Re-expresses a chi matrix in the generalized Pauli basis. The channel it
/// represents, and hence any basis-insensitive figure of merit, is unchanged.
pub fn chi_to_pauli_basis(chi: &ProcessMatrix) -> Result<ProcessMatrix> {
    match chi.basis {
        ChiBasis::GeneralizedPauli => Ok(chi.clone()),
        ChiBasis::Projection => {
            let c = projection_to_pauli_map(chi.dim)?;
            let m = c.mul(&chi.matrix).mul(&c.dagger());
            ProcessMatrix::new(m, ChiBasis::GeneralizedPauli, chi.dim)
        }
    }
}

/// Hermitized, trace-normalized chi in the orthogonal display basis, the
/// canonical form fidelities are evaluated in.
fn canonical_chi(chi: &ProcessMatrix) -> Result<CMatrix> {
    let p = chi_to_pauli_basis(chi)?;
    let h = p.matrix.hermitian_part();
    let tr = h.trace().re;
    if tr.abs() < 1e-12 {
        return Err(Error::Dimension("chi has (near-)zero trace".into()));
    }
    Ok(h.scale(C64::new(1.0 / tr, 0.0)))
}

/// Fidelity between two channels: (Tr |sqrt(chi_a) sqrt(chi_b)|)^2 on the
/// trace-normalized process matrices, evaluated in the orthogonal basis.
///
/// Symmetric, 1 exactly for identical channels, and for unitary channels it
/// reduces to the overlap |Tr(U^dag V)|^2 / d^2.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Dimension(format!(
            "channel dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    let ca = canonical_chi(a)?;
    let cb = canonical_chi(b)?;
    let ra = sqrt_psd(&ca);
    // Tr|sqrt(a) sqrt(b)| = sum_i sqrt(eig_i(sqrt(a) b sqrt(a))).
    let s = ra.mul(&cb).mul(&ra).hermitian_part();
    let eig = hermitian_eigen(&s);
    let clip = 1e-12 * eig.values.iter().fold(0.0f64, |a, &w| a.max(w.abs()));
    let root_sum: f64 = eig
        .values
        .iter()
        .map(|&w| if w > clip { w.sqrt() } else { 0.0 })
        .sum();
    Ok(root_sum * root_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::ssw02;
    use crate::linalg::{haar_random_unitary, ONE, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_density(dim: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut g = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let p = g.mul(&g.dagger());
        let tr = p.trace().re;
        p.scale(C64::new(1.0 / tr, 0.0))
    }

    #[test]
    fn identity_channel_has_unit_weight_on_a0() {
        let chi = unitary_to_chi(&CMatrix::identity(3)).unwrap();
        assert_eq!(chi.basis, ChiBasis::Projection);
        assert!((chi.matrix[(0, 0)] - ONE).norm() < 1e-12);
        for m in 0..9 {
            for n in 0..9 {
                if (m, n) != (0, 0) {
                    assert!(chi.matrix[(m, n)].norm() < 1e-12, "({m},{n})");
                }
            }
        }
        assert!(chi.tp_residual().unwrap() < 1e-10);
    }

    #[test]
    fn chi_reproduces_unitary_conjugation() {
        for (dim, seed) in [(2usize, 5u64), (3, 6), (3, 7)] {
            let u = haar_random_unitary(dim, seed);
            let chi = unitary_to_chi(&u).unwrap();
            let rho = random_density(dim, 1000 + seed);
            let via_chi = chi.apply(&rho).unwrap();
            let direct = u.mul(&rho).mul(&u.dagger());
            assert!(via_chi.max_abs_diff(&direct) < 1e-10, "dim={dim} seed={seed}");
        }
    }

    #[test]
    fn non_unitary_input_is_rejected() {
        let mut m = CMatrix::identity(3);
        m[(0, 0)] = C64::new(1.1, 0.0);
        assert!(matches!(unitary_to_chi(&m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn fidelity_matches_trace_overlap_for_unitary_pairs() {
        for seed in 0..6u64 {
            let dim = if seed % 2 == 0 { 3 } else { 2 };
            let u = haar_random_unitary(dim, 2 * seed + 1);
            let v = haar_random_unitary(dim, 2 * seed + 2);
            let f = process_fidelity(&unitary_to_chi(&u).unwrap(), &unitary_to_chi(&v).unwrap())
                .unwrap();
            let overlap = u.dagger().trace_of_product(&v).norm_sqr() / (dim * dim) as f64;
            assert!((f - overlap).abs() < 1e-9, "dim={dim} f={f} overlap={overlap}");
        }
    }

    #[test]
    fn fidelity_of_a_unitary_channel_with_itself_is_one() {
        let chi = unitary_to_chi(&haar_random_unitary(3, 77)).unwrap();
        let f = process_fidelity(&chi, &chi).unwrap();
        assert!((f - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_and_bit_flip_are_orthogonal_channels() {
        let [x, _, _] = crate::bases::paulis();
        let chi_i = unitary_to_chi(&CMatrix::identity(2)).unwrap();
        let chi_x = unitary_to_chi(&x).unwrap();
        let f = process_fidelity(&chi_i, &chi_x).unwrap();
        assert!(f.abs() < 1e-10, "f = {f}");
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded_for_random_channels() {
        // Random CPTP channels from normalized random Kraus families.
        for seed in 0..8u64 {
            let dim = 3;
            let mut rng = ChaCha12Rng::seed_from_u64(900 + seed);
            let mut kraus = Vec::new();
            let mut total = CMatrix::zeros(dim, dim);
            for _ in 0..3 {
                let mut g = CMatrix::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
                total = total.add(&g.dagger().mul(&g));
                kraus.push(g);
            }
            // Normalize so sum K^dag K = I.
            let inv_root = {
                let eig = hermitian_eigen(&total);
                let mut m = CMatrix::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        let mut acc = ZERO;
                        for k in 0..dim {
                            acc += eig.vectors[(i, k)]
                                * (1.0 / eig.values[k].sqrt())
                                * eig.vectors[(j, k)].conj();
                        }
                        m[(i, j)] = acc;
                    }
                }
                m
            };
            let kraus: Vec<CMatrix> = kraus.iter().map(|k| k.mul(&inv_root)).collect();
            let chi_a = kraus_to_chi(&kraus).unwrap();
            assert!(chi_a.tp_residual().unwrap() < 1e-10);
            let chi_b = unitary_to_chi(&haar_random_unitary(dim, 500 + seed)).unwrap();
            let fab = process_fidelity(&chi_a, &chi_b).unwrap();
            let fba = process_fidelity(&chi_b, &chi_a).unwrap();
            assert!((fab - fba).abs() < 1e-9);
            assert!((-1e-9..=1.0 + 1e-9).contains(&fab), "f = {fab}");
        }
    }

    #[test]
    fn basis_change_preserves_fidelity_and_the_channel_action() {
        let u = ssw02();
        let chi = unitary_to_chi(&u).unwrap();
        let chi_p = chi_to_pauli_basis(&chi).unwrap();
        // Same channel action on a random state.
        let rho = random_density(3, 4242);
        assert!(chi.apply(&rho).unwrap().max_abs_diff(&chi_p.apply(&rho).unwrap()) < 1e-10);
        // Same fidelity against an independent target.
        let target = unitary_to_chi(&haar_random_unitary(3, 31)).unwrap();
        let f_a = process_fidelity(&chi, &target).unwrap();
        let f_p = process_fidelity(&chi_p, &target).unwrap();
        assert!((f_a - f_p).abs() < 1e-10);
    }

    #[test]
    fn ssw02_chi_structure_in_the_display_basis() {
        // In the generalized Pauli basis the (I, I) weight of a unitary
        // channel is |Tr U|^2 / d^2; for ssw02 that is ((1+sqrt(2))/3)^2.
        let chi = chi_to_pauli_basis(&unitary_to_chi(&ssw02()).unwrap()).unwrap();
        let expect = ((1.0 + 2.0f64.sqrt()) / 3.0).powi(2);
        assert!((chi.matrix[(0, 0)].re - expect).abs() < 1e-12);
        assert!((chi.matrix.trace().re - 1.0).abs() < 1e-12);
        // Rank one: largest eigenvalue 1, rest ~ 0.
        let eig = hermitian_eigen(&chi.matrix.hermitian_part());
        assert!((eig.values[8] - 1.0).abs() < 1e-10);
        assert!(eig.values[7].abs() < 1e-10);
    }
}
