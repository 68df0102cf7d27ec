//! Operator bases for qubits and qutrits: Gell-Mann generators, the
//! generalized (Weyl) Pauli basis used for displaying process matrices, and
//! the unitary projection set used by process tomography.

use crate::error::{Error, Result};
use crate::linalg::{exp_i_hermitian, hermitian_eigen, CMatrix, C64, I, ONE, ZERO};

/// Pauli X, Y, Z.
pub fn paulis() -> [CMatrix; 3] {
    let x = CMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]);
    let y = CMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]]);
    let z = CMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, -ONE]]);
    [x, y, z]
}

/// The eight Gell-Mann matrices in the standard order: lambda_1/2 couple the
/// 0-1 pair, lambda_4/5 the 0-2 pair, lambda_6/7 the 1-2 pair, lambda_3 and
/// lambda_8 are the diagonal generators.
#[derive(Debug, Clone)]
pub struct GellMannSet {
    matrices: Vec<CMatrix>,
}

impl GellMannSet {
    pub fn new() -> Self {
        let s3 = 3.0f64.sqrt();
        let m = |rows: &[&[C64]]| CMatrix::from_rows(rows);
        let matrices = vec![
            m(&[&[ZERO, ONE, ZERO], &[ONE, ZERO, ZERO], &[ZERO, ZERO, ZERO]]),
            m(&[&[ZERO, -I, ZERO], &[I, ZERO, ZERO], &[ZERO, ZERO, ZERO]]),
            m(&[&[ONE, ZERO, ZERO], &[ZERO, -ONE, ZERO], &[ZERO, ZERO, ZERO]]),
            m(&[&[ZERO, ZERO, ONE], &[ZERO, ZERO, ZERO], &[ONE, ZERO, ZERO]]),
            m(&[&[ZERO, ZERO, -I], &[ZERO, ZERO, ZERO], &[I, ZERO, ZERO]]),
            m(&[&[ZERO, ZERO, ZERO], &[ZERO, ZERO, ONE], &[ZERO, ONE, ZERO]]),
            m(&[&[ZERO, ZERO, ZERO], &[ZERO, ZERO, -I], &[ZERO, I, ZERO]]),
            m(&[
                &[C64::new(1.0 / s3, 0.0), ZERO, ZERO],
                &[ZERO, C64::new(1.0 / s3, 0.0), ZERO],
                &[ZERO, ZERO, C64::new(-2.0 / s3, 0.0)],
            ]),
        ];
        GellMannSet { matrices }
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// lambda_k, 1-indexed like the standard notation.
    pub fn lambda(&self, k: usize) -> &CMatrix {
        &self.matrices[k - 1]
    }
}

impl Default for GellMannSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Cyclic shift X_3: |j> -> |j+1 mod 3>.
pub fn shift_x3() -> CMatrix {
    CMatrix::from_rows(&[&[ZERO, ZERO, ONE], &[ONE, ZERO, ZERO], &[ZERO, ONE, ZERO]])
}

/// Clock Z_3 = diag(1, beta, beta^2) with beta = -1/2 + i sqrt(3)/2 exactly.
pub fn clock_z3() -> CMatrix {
    let beta = C64::new(-0.5, 3.0f64.sqrt() / 2.0);
    CMatrix::from_diag(&[ONE, beta, beta * beta])
}

/// Orthogonal unitary operator basis used for displaying process matrices:
/// {I, X, Y, Z} for qubits, the nine Weyl words
/// {I, X1, X2, Z1, Z1X1, Z1X2, Z2, Z2X1, Z2X2} for qutrits.
/// Satisfies Tr(P_j^dag P_k) = d delta_jk.
#[derive(Debug, Clone)]
pub struct GeneralizedPauliBasis {
    dim: usize,
    ops: Vec<CMatrix>,
    labels: Vec<String>,
}

impl GeneralizedPauliBasis {
    pub fn new(dim: usize) -> Result<Self> {
        match dim {
            2 => {
                let [x, y, z] = paulis();
                Ok(GeneralizedPauliBasis {
                    dim,
                    ops: vec![CMatrix::identity(2), x, y, z],
                    labels: ["I", "X", "Y", "Z"].iter().map(|s| s.to_string()).collect(),
                })
            }
            3 => {
                let x = shift_x3();
                let z = clock_z3();
                let xx = x.mul(&x);
                let zz = z.mul(&z);
                let ops = vec![
                    CMatrix::identity(3),
                    x.clone(),
                    xx.clone(),
                    z.clone(),
                    z.mul(&x),
                    z.mul(&xx),
                    zz.clone(),
                    zz.mul(&x),
                    zz.mul(&xx),
                ];
                let labels = ["I", "X1", "X2", "Z1", "Z1X1", "Z1X2", "Z2", "Z2X1", "Z2X2"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                Ok(GeneralizedPauliBasis { dim, ops, labels })
            }
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// The d^2 tomography projection unitaries A_m: the identity followed by
/// exp(-i pi/4 g) for each traceless Hermitian generator g (Paulis for d = 2,
/// Gell-Mann matrices for d = 3). Applying A_m before a computational-basis
/// readout realizes the m-th measurement setting.
#[derive(Debug, Clone)]
pub struct ProjectionOperatorSet {
    dim: usize,
    ops: Vec<CMatrix>,
    labels: Vec<String>,
}

impl ProjectionOperatorSet {
    pub fn new(dim: usize) -> Result<Self> {
        let generators: Vec<CMatrix> = match dim {
            2 => paulis().to_vec(),
            3 => GellMannSet::new().matrices().to_vec(),
            d => return Err(Error::UnsupportedDimension(d)),
        };
        let mut ops = vec![CMatrix::identity(dim)];
        for g in &generators {
            ops.push(exp_i_hermitian(g, std::f64::consts::FRAC_PI_4));
        }
        let labels = (0..ops.len()).map(|m| format!("A{m}")).collect();
        Ok(ProjectionOperatorSet { dim, ops, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Matrix whose columns are the vectorized A_m; invertible exactly when
    /// the set is an operator basis.
    pub fn vectorized_basis(&self) -> CMatrix {
        let d2 = self.dim * self.dim;
        let mut b = CMatrix::zeros(d2, self.ops.len());
        for (m, a) in self.ops.iter().enumerate() {
            b.set_column(m, &a.vectorize());
        }
        b
    }
}

/// Rank of the Gram matrix G_jk = Tr(B_j^dag B_k) of an operator family,
/// counting eigenvalues above a relative threshold.
pub fn operator_gram_rank(ops: &[CMatrix]) -> usize {
    let n = ops.len();
    let mut g = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            g[(j, k)] = ops[j].dagger().trace_of_product(&ops[k]);
        }
    }
    let eig = hermitian_eigen(&g.hermitian_part());
    let max = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max == 0.0 {
        return 0;
    }
    eig.values.iter().filter(|&&w| w.abs() > 1e-10 * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn gell_mann_are_hermitian_traceless_and_orthogonal() {
        let set = GellMannSet::new();
        for (a, la) in set.matrices().iter().enumerate() {
            assert!(la.is_hermitian(1e-14), "lambda_{}", a + 1);
            assert!(la.trace().norm() < 1e-14, "lambda_{}", a + 1);
            for (b, lb) in set.matrices().iter().enumerate() {
                let overlap = la.trace_of_product(lb);
                let expect = if a == b { 2.0 } else { 0.0 };
                assert!(
                    (overlap - C64::new(expect, 0.0)).norm() < 1e-14,
                    "Tr(l{} l{}) = {overlap}",
                    a + 1,
                    b + 1
                );
            }
        }
    }

    #[test]
    fn lambda_8_is_the_diagonal_y_type_generator() {
        let set = GellMannSet::new();
        let s3 = 3.0f64.sqrt();
        let expect = CMatrix::from_diag(&[
            C64::new(1.0 / s3, 0.0),
            C64::new(1.0 / s3, 0.0),
            C64::new(-2.0 / s3, 0.0),
        ]);
        assert!(set.lambda(8).max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn shift_and_clock_are_order_three() {
        let x = shift_x3();
        let z = clock_z3();
        assert!(x.mul(&x).mul(&x).max_abs_diff(&CMatrix::identity(3)) < 1e-15);
        assert!(z.mul(&z).mul(&z).max_abs_diff(&CMatrix::identity(3)) < 1e-14);
        // X_3 shifts |0> to |1>.
        assert_eq!(x[(1, 0)], ONE);
        assert_eq!(x[(0, 0)], ZERO);
    }

    #[test]
    fn generalized_pauli_basis_is_orthogonal_with_norm_d() {
        for d in [2usize, 3] {
            let basis = GeneralizedPauliBasis::new(d).unwrap();
            assert_eq!(basis.len(), d * d);
            for (j, pj) in basis.ops().iter().enumerate() {
                assert!(pj.is_unitary(1e-13));
                for (k, pk) in basis.ops().iter().enumerate() {
                    let overlap = pj.dagger().trace_of_product(pk);
                    let expect = if j == k { d as f64 } else { 0.0 };
                    assert!(
                        (overlap - C64::new(expect, 0.0)).norm() < 1e-13,
                        "d={d} Tr(P{j}^dag P{k}) = {overlap}"
                    );
                }
            }
        }
    }

    #[test]
    fn qubit_projection_on_x_axis_is_i_minus_ix_over_sqrt2() {
        let set = ProjectionOperatorSet::new(2).unwrap();
        let [x, _, _] = paulis();
        let expect = CMatrix::identity(2)
            .add(&x.scale(-I))
            .scale(C64::new(FRAC_1_SQRT_2, 0.0));
        assert!(set.ops()[1].max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn projection_sets_are_unitary_operator_bases() {
        for d in [2usize, 3] {
            let set = ProjectionOperatorSet::new(d).unwrap();
            assert_eq!(set.len(), d * d);
            for a in set.ops() {
                assert!(a.is_unitary(1e-12));
            }
            assert_eq!(operator_gram_rank(set.ops()), d * d, "d={d}");
        }
    }

    #[test]
    fn unsupported_dimensions_are_rejected() {
        assert!(GeneralizedPauliBasis::new(4).is_err());
        assert!(ProjectionOperatorSet::new(5).is_err());
    }
}
