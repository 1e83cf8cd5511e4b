//! Powers of lower-unipotent matrices through the binomial expansion
//! `A^k = sum_{m < p} C(k, m) (A - I)^m`.

use nalgebra::DMatrix;

use super::binomial::{binomial, binomial_f64};
use super::MomentError;
use crate::model::{is_lower_unipotent, ZERO_TOLERANCE};

/// A lower-triangular matrix with unit diagonal and its cached nilpotent powers.
#[derive(Debug, Clone, PartialEq)]
pub struct UnipotentMatrix {
    matrix: DMatrix<f64>,
    /// `C^0 .. C^{p-1}` with `C = A - I`.
    c_powers: Vec<DMatrix<f64>>,
}

impl UnipotentMatrix {
    pub fn new(a: &DMatrix<f64>) -> Result<Self, MomentError> {
        if !is_lower_unipotent(a) {
            return Err(MomentError::NotUnipotent);
        }
        let p = a.nrows();
        // Structural zeros are forced so that C^p vanishes exactly.
        let c = DMatrix::from_fn(p, p, |i, j| {
            if i > j && a[(i, j)].abs() > ZERO_TOLERANCE {
                a[(i, j)]
            } else {
                0.0
            }
        });
        let matrix = &c + DMatrix::identity(p, p);
        let mut c_powers = vec![DMatrix::identity(p, p)];
        for m in 1..p {
            let next = &c_powers[m - 1] * &c;
            c_powers.push(next);
        }
        Ok(UnipotentMatrix { matrix, c_powers })
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `C^m`; the zero matrix for `m >= p`.
    pub fn c_power(&self, m: usize) -> DMatrix<f64> {
        self.c_powers.get(m).cloned().unwrap_or_else(|| DMatrix::zeros(self.p(), self.p()))
    }

    /// Entry `c^{[m]}_{i,j}` (0-based indices).
    pub fn c_entry(&self, m: usize, i: usize, j: usize) -> f64 {
        self.c_powers.get(m).map_or(0.0, |c| c[(i, j)])
    }

    /// `A^k`.
    pub fn power(&self, k: u64) -> DMatrix<f64> {
        let p = self.p();
        let mut out = DMatrix::zeros(p, p);
        for (m, cm) in self.c_powers.iter().enumerate() {
            let coeff = binomial_f64(k, m as u64);
            if coeff != 0.0 {
                out += coeff * cm;
            }
        }
        out
    }
}

/// `A^k` for a lower-unipotent `A`.
pub fn unipotent_power(a: &DMatrix<f64>, k: u64) -> Result<DMatrix<f64>, MomentError> {
    Ok(UnipotentMatrix::new(a)?.power(k))
}

/// `A^k` in exact integer arithmetic, with overflow detection.
pub fn unipotent_power_exact(a: &DMatrix<i128>, k: u64) -> Result<DMatrix<i128>, MomentError> {
    let p = a.nrows();
    let unipotent = a.is_square()
        && (0..p).all(|i| a[(i, i)] == 1 && (i + 1..p).all(|j| a[(i, j)] == 0));
    if !unipotent {
        return Err(MomentError::NotUnipotent);
    }
    let c = a - DMatrix::identity(p, p);
    let mut c_power = DMatrix::<i128>::identity(p, p);
    let mut out = DMatrix::<i128>::zeros(p, p);
    for m in 0..p {
        if m > 0 {
            c_power = checked_product(&c_power, &c)?;
        }
        let coeff = i128::try_from(binomial(k, m as u64).ok_or(MomentError::Overflow)?)
            .map_err(|_| MomentError::Overflow)?;
        for (o, &x) in out.iter_mut().zip(c_power.iter()) {
            *o = x.checked_mul(coeff).and_then(|t| o.checked_add(t)).ok_or(MomentError::Overflow)?;
        }
    }
    Ok(out)
}

pub(crate) fn checked_product(x: &DMatrix<i128>, y: &DMatrix<i128>) -> Result<DMatrix<i128>, MomentError> {
    let (n, inner, m) = (x.nrows(), x.ncols(), y.ncols());
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut acc: i128 = 0;
            for r in 0..inner {
                acc = x[(i, r)]
                    .checked_mul(y[(r, j)])
                    .and_then(|t| acc.checked_add(t))
                    .ok_or(MomentError::Overflow)?;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}
