//! Named target gates.

use crate::linalg::{CMatrix, C64, ONE, ZERO};

/// Square root of the 0-2 swap: a qutrit gate acting as a 90-degree rotation
/// in the {|0>, |2>} subspace and as the identity on |1>. Squaring it swaps
/// |0> and |2> (up to the -i phase on the swapped pair).
pub fn ssw02() -> CMatrix {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mih = C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
    CMatrix::from_rows(&[&[h, ZERO, mih], &[ZERO, ONE, ZERO], &[mih, ZERO, h]])
}
