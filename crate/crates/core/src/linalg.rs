//! Dense complex matrices and the small-matrix decompositions the rest of the
//! crate is built on.
//!
//! Everything here is hand-rolled rather than delegated to a LAPACK backend:
//! the matrices are tiny (d = 2..3 for states, d^2 = 4..9 for process
//! matrices, d^4 = 81 for tomography Gram matrices) and the toolchain promises
//! bitwise-reproducible outputs for a fixed seed, which is easiest to audit
//! when every floating-point operation has a fixed order.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense row-major complex matrix.
///
/// Serializes as nested rows of `[re, im]` pairs, the interchange form used
/// in result documents.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "Vec<Vec<(f64, f64)>>", try_from = "Vec<Vec<(f64, f64)>>")]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = CMatrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        CMatrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, rhs: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        self.mul_into(rhs, &mut out);
        out
    }

    /// `out = self * rhs` without allocating; `out` must already have the
    /// right shape and must not alias either operand.
    pub fn mul_into(&self, rhs: &CMatrix, out: &mut CMatrix) {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        assert_eq!(out.rows, self.rows);
        assert_eq!(out.cols, rhs.cols);
        let n = self.cols;
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.data[i * n + k] * rhs.data[k * rhs.cols + j];
                }
                out.data[i * rhs.cols + j] = acc;
            }
        }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        self.zip(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * rhs` elementwise.
    pub fn axpy(&mut self, s: C64, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += s * b;
        }
    }

    fn zip(&self, rhs: &CMatrix, f: impl Fn(C64, C64) -> C64) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(rhs.data.iter()).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Tr(self * rhs) without forming the product.
    pub fn trace_of_product(&self, rhs: &CMatrix) -> C64 {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self.data[i * self.cols + k] * rhs.data[k * rhs.cols + i];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.dagger()) <= tol
    }

    /// Residual ||U^dag U - I||_max; zero for exactly unitary input.
    pub fn unitarity_residual(&self) -> f64 {
        assert!(self.is_square());
        self.dagger().mul(self).max_abs_diff(&CMatrix::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.unitarity_residual() <= tol
    }

    /// (M + M^dag) / 2.
    pub fn hermitian_part(&self) -> CMatrix {
        self.add(&self.dagger()).scale(C64::new(0.5, 0.0))
    }

    /// Row-major flattening; the fixed convention used for operator
    /// expansions throughout the crate.
    pub fn vectorize(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    /// Splits into (real, imaginary) row-major nested arrays, the JSON wire
    /// layout for complex matrices.
    pub fn to_re_im(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let re = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].re).collect())
            .collect();
        let im = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].im).collect())
            .collect();
        (re, im)
    }

    pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
        let rows = re.len();
        if rows == 0 || im.len() != rows {
            return Err(Error::Dimension("re/im row counts differ or are empty".into()));
        }
        let cols = re[0].len();
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            if re[i].len() != cols || im[i].len() != cols {
                return Err(Error::Dimension("ragged re/im rows".into()));
            }
            for j in 0..cols {
                m[(i, j)] = C64::new(re[i][j], im[i][j]);
            }
        }
        Ok(m)
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl From<CMatrix> for Vec<Vec<(f64, f64)>> {
    fn from(m: CMatrix) -> Self {
        (0..m.rows)
            .map(|i| (0..m.cols).map(|j| (m[(i, j)].re, m[(i, j)].im)).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<(f64, f64)>>> for CMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<(f64, f64)>>) -> std::result::Result<Self, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err("matrix must be non-empty".into());
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err("matrix rows have unequal lengths".into());
        }
        let data = rows
            .into_iter()
            .flatten()
            .map(|(re, im)| C64::new(re, im))
            .collect();
        Ok(CMatrix { rows: r, cols: c, data })
    }
}

/// Eigendecomposition of a Hermitian matrix: `matrix = V diag(values) V^dag`
/// with `values` ascending and the columns of `V` orthonormal.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Quadratically convergent once off-diagonal mass is small; for the matrix
/// sizes in this crate (up to 81 x 81) it reaches machine precision in a
/// handful of sweeps and, unlike threaded LAPACK, is bitwise deterministic.
pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    assert!(m.is_square(), "eigendecomposition needs a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let u = a[(p, q)];
                if u.norm() <= 1e-300 {
                    continue;
                }
                let phase = u / u.norm();
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // tan(2 theta) = 2|u| / (aqq - app), smaller-angle root.
                let tau = (aqq - app) / (2.0 * u.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sp = phase * s; // s * e^{i phi}
                // Column update: A <- A J, with J = [[c, sp], [-conj(sp), c]]
                // in the (p, q) plane.
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * c - arq * sp.conj();
                    a[(r, q)] = arp * sp + arq * c;
                }
                // Row update: A <- J^dag A.
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = apr * c - aqr * sp;
                    a[(q, r)] = apr * sp.conj() + aqr * c;
                }
                // Accumulate eigenvectors: V <- V J.
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * c - vrq * sp.conj();
                    v[(r, q)] = vrp * sp + vrq * c;
                }
                // Rotation is exact on the 2x2 block; stamp out the residual.
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &v.column(old));
    }
    HermitianEigen { values, vectors }
}

/// exp(-i t H) for Hermitian H, via eigendecomposition. Exactly unitary up to
/// the accuracy of the eigensolver.
pub fn exp_i_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = hermitian_eigen(h);
    exp_from_eigen(&eig, t)
}

/// exp(-i t H) from a precomputed eigendecomposition of H.
pub fn exp_from_eigen(eig: &HermitianEigen, t: f64) -> CMatrix {
    let n = eig.values.len();
    let v = &eig.vectors;
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                let phase = C64::from_polar(1.0, -eig.values[k] * t);
                acc += v[(i, k)] * phase * v[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Hermitian square root of a PSD matrix; eigenvalues are clipped at zero so
/// slightly negative rounding noise does not produce NaNs.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let eig = hermitian_eigen(m);
    let n = eig.values.len();
    let v = &eig.vectors;
    // Eigenvalues within solver noise of zero are treated as exact zeros;
    // sqrt would otherwise inflate them by orders of magnitude.
    let clip = 1e-12 * eig.values.iter().fold(0.0f64, |a, &w| a.max(w.abs()));
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                let w = eig.values[k];
                let root = if w > clip { w.sqrt() } else { 0.0 };
                acc += v[(i, k)] * root * v[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Solves A X = B by Gaussian elimination with partial pivoting.
/// Deterministic pivot choice: largest |pivot|, lowest index on ties.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    assert!(a.is_square());
    assert_eq!(a.rows(), b.rows());
    let n = a.rows();
    let m = b.cols();
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut piv = col;
        let mut best = lhs[(col, col)].norm();
        for r in (col + 1)..n {
            let mag = lhs[(r, col)].norm();
            if mag > best {
                best = mag;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::Dimension("singular linear system".into()));
        }
        if piv != col {
            for j in 0..n {
                let tmp = lhs[(col, j)];
                lhs[(col, j)] = lhs[(piv, j)];
                lhs[(piv, j)] = tmp;
            }
            for j in 0..m {
                let tmp = rhs[(col, j)];
                rhs[(col, j)] = rhs[(piv, j)];
                rhs[(piv, j)] = tmp;
            }
        }
        let inv = ONE / lhs[(col, col)];
        for r in (col + 1)..n {
            let factor = lhs[(r, col)] * inv;
            if factor == ZERO {
                continue;
            }
            for j in col..n {
                let sub = factor * lhs[(col, j)];
                lhs[(r, j)] -= sub;
            }
            for j in 0..m {
                let sub = factor * rhs[(col, j)];
                rhs[(r, j)] -= sub;
            }
        }
    }
    let mut x = CMatrix::zeros(n, m);
    for col in 0..m {
        for r in (0..n).rev() {
            let mut acc = rhs[(r, col)];
            for j in (r + 1)..n {
                acc -= lhs[(r, j)] * x[(j, col)];
            }
            x[(r, col)] = acc / lhs[(r, r)];
        }
    }
    Ok(x)
}

/// Haar-distributed random unitary, reproducible for a fixed seed.
///
/// QR of a complex Ginibre matrix via modified Gram-Schmidt. The column
/// normalization makes diag(R) real positive, which is exactly the phase
/// convention that turns "Q from QR" into the Haar measure (Mezzadri 2007).
pub fn haar_random_unitary(dim: usize, seed: u64) -> CMatrix {
    assert!(dim >= 2, "need dim >= 2");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut g = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            g[(i, j)] = C64::new(re, im) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        }
    }
    let mut q = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut v = g.column(j);
        // Two orthogonalization passes; one is not always enough in floating
        // point when columns are nearly dependent.
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let proj: C64 = qk.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(qk.iter()) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        q.set_column(j, &v);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        m.hermitian_part()
    }

    #[test]
    fn matmul_against_hand_computed_product() {
        let a = CMatrix::from_rows(&[&[ONE, I], &[ZERO, C64::new(2.0, 0.0)]]);
        let b = CMatrix::from_rows(&[&[ONE, ZERO], &[ONE, I]]);
        let c = a.mul(&b);
        assert_eq!(c[(0, 0)], ONE + I);
        assert_eq!(c[(0, 1)], I * I);
        assert_eq!(c[(1, 0)], C64::new(2.0, 0.0));
        assert_eq!(c[(1, 1)], C64::new(0.0, 2.0));
    }

    #[test]
    fn jacobi_reconstructs_random_hermitian_matrices() {
        for n in [2usize, 3, 9, 17] {
            let m = random_hermitian(n, 7 + n as u64);
            let eig = hermitian_eigen(&m);
            // V unitary.
            assert!(eig.vectors.unitarity_residual() < 1e-12, "n={n}");
            // V diag(w) V^dag == M.
            let lam = CMatrix::from_diag(
                &eig.values.iter().map(|&w| C64::new(w, 0.0)).collect::<Vec<_>>(),
            );
            let rec = eig.vectors.mul(&lam).mul(&eig.vectors.dagger());
            assert!(rec.max_abs_diff(&m) < 1e-12 * m.frobenius_norm().max(1.0), "n={n}");
            // Ascending order.
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn exp_of_pauli_x_matches_closed_form() {
        // exp(-i t X) = cos(t) I - i sin(t) X
        let x = CMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]);
        let t = 0.7313;
        let u = exp_i_hermitian(&x, t);
        let expect = CMatrix::from_rows(&[
            &[C64::new(t.cos(), 0.0), C64::new(0.0, -t.sin())],
            &[C64::new(0.0, -t.sin()), C64::new(t.cos(), 0.0)],
        ]);
        assert!(u.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn exp_i_hermitian_is_unitary_for_random_generators() {
        for seed in 0..5u64 {
            let h = random_hermitian(3, 100 + seed);
            let u = exp_i_hermitian(&h, 2.31);
            assert!(u.unitarity_residual() < 1e-12);
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        for seed in 0..4u64 {
            let a = random_hermitian(5, 40 + seed).add(&CMatrix::identity(5).scale(C64::new(6.0, 0.0)));
            let x_true = random_hermitian(5, 90 + seed);
            let b = a.mul(&x_true);
            let x = solve(&a, &b).unwrap();
            assert!(x.max_abs_diff(&x_true) < 1e-10);
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = {
            let g = random_hermitian(4, 3);
            g.mul(&g.dagger()) // PSD by construction
        };
        let r = sqrt_psd(&m);
        assert!(r.mul(&r).max_abs_diff(&m) < 1e-11);
    }

    #[test]
    fn haar_unitaries_are_unitary_and_seed_stable() {
        let u1 = haar_random_unitary(3, 42);
        let u2 = haar_random_unitary(3, 42);
        let u3 = haar_random_unitary(3, 43);
        assert!(u1.unitarity_residual() < 1e-12);
        assert_eq!(u1, u2, "same seed must give the identical matrix");
        assert!(u1.max_abs_diff(&u3) > 1e-3, "different seeds should differ");
    }

    #[test]
    fn haar_first_moment_matches_uniform_overlap() {
        // For Haar on U(2), |U_00|^2 ~ Beta(1, 1): mean 1/2, variance 1/12.
        // 10^4 samples -> standard error of the mean 2.89e-3; gate at 3 SE.
        let n = 10_000u64;
        let mean = (0..n)
            .map(|s| haar_random_unitary(2, s)[(0, 0)].norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 0.5).abs() < 3.0 * (1.0f64 / 12.0 / n as f64).sqrt(),
            "mean |U00|^2 = {mean}"
        );
    }
}
