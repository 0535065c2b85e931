//! Diagonal-band storage for the structured operators that appear in the
//! master equation (ladder powers, number operators, σ_z ⊗ force terms).
//! Products with a dense column-major matrix cost O(bands · d²).

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Diagonal {
    /// Entry `values[m]` sits at `(row0 + m, row0 + m + offset)`.
    pub offset: isize,
    pub values: Vec<Complex64>,
}

impl Diagonal {
    #[inline]
    fn row0(&self) -> usize {
        if self.offset < 0 {
            (-self.offset) as usize
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Banded {
    pub dim: usize,
    pub diagonals: Vec<Diagonal>,
}

impl Banded {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            diagonals: Vec::new(),
        }
    }

    /// Extracts every diagonal holding a nonzero entry.
    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let d = m.nrows();
        let mut diagonals = Vec::new();
        for offset in -(d as isize - 1)..(d as isize) {
            let row0 = if offset < 0 { (-offset) as usize } else { 0 };
            let len = d - offset.unsigned_abs();
            let values: Vec<Complex64> = (0..len)
                .map(|k| m[(row0 + k, ((row0 + k) as isize + offset) as usize)])
                .collect();
            if values.iter().any(|v| *v != ZERO) {
                diagonals.push(Diagonal { offset, values });
            }
        }
        Self { dim: d, diagonals }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for diag in &self.diagonals {
            let row0 = diag.row0();
            for (k, v) in diag.values.iter().enumerate() {
                let i = row0 + k;
                let j = (i as isize + diag.offset) as usize;
                m[(i, j)] += *v;
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let diagonals = self
            .diagonals
            .iter()
            .map(|d| Diagonal {
                offset: -d.offset,
                values: d.values.iter().map(|v| v.conj()).collect(),
            })
            .collect();
        Self {
            dim: self.dim,
            diagonals,
        }
    }

    /// `self += s * other`, merging diagonals with matching offsets.
    pub fn add_scaled(&mut self, other: &Banded, s: Complex64) {
        debug_assert_eq!(self.dim, other.dim);
        for od in &other.diagonals {
            match self.diagonals.iter_mut().find(|d| d.offset == od.offset) {
                Some(d) => {
                    for (a, b) in d.values.iter_mut().zip(&od.values) {
                        *a += s * b;
                    }
                }
                None => self.diagonals.push(Diagonal {
                    offset: od.offset,
                    values: od.values.iter().map(|v| s * v).collect(),
                }),
            }
        }
    }

    /// Banded product; used once per operator when building generators.
    pub fn mul(&self, other: &Banded) -> Banded {
        Banded::from_dense(&(self.to_dense() * other.to_dense()))
    }

    /// Induced ∞-norm (max absolute row sum), an upper bound on the spectral norm.
    pub fn inf_norm(&self) -> f64 {
        let mut rows = vec![0.0; self.dim];
        for diag in &self.diagonals {
            let row0 = diag.row0();
            for (k, v) in diag.values.iter().enumerate() {
                rows[row0 + k] += v.norm();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `out += self * x`.
    pub fn mul_dense_acc(&self, x: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let d = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for diag in &self.diagonals {
            let row0 = diag.row0();
            let len = diag.values.len();
            let src0 = (row0 as isize + diag.offset) as usize;
            for j in 0..d {
                let col = j * d;
                let o = &mut os[col + row0..col + row0 + len];
                let s = &xs[col + src0..col + src0 + len];
                for ((o, v), s) in o.iter_mut().zip(&diag.values).zip(s) {
                    *o += v * s;
                }
            }
        }
    }

    /// `out += x * self`.
    pub fn dense_mul_acc(&self, x: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let d = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for diag in &self.diagonals {
            let row0 = diag.row0();
            // entry (i, i + offset) feeds column j = i + offset from column i of x
            for (k, v) in diag.values.iter().enumerate() {
                let i = row0 + k;
                let j = (i as isize + diag.offset) as usize;
                let o = &mut os[j * d..(j + 1) * d];
                let s = &xs[i * d..(i + 1) * d];
                for (o, s) in o.iter_mut().zip(s) {
                    *o += s * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::MaxAbs;

    fn sample(d: usize, seed: u64) -> DMatrix<Complex64> {
        DMatrix::from_fn(d, d, |i, j| {
            let a = ((i * 7 + j * 13) as u64 ^ seed) as f64;
            Complex64::new((a * 0.37).sin(), (a * 0.91).cos())
        })
    }

    #[test]
    fn dense_round_trip_and_products() {
        let d = 6;
        let mut op = DMatrix::zeros(d, d);
        for i in 0..d - 2 {
            op[(i, i + 2)] = Complex64::new(i as f64 + 1.0, 0.5);
        }
        for i in 1..d {
            op[(i, i - 1)] = Complex64::new(-0.3, i as f64);
        }
        let b = Banded::from_dense(&op);
        assert_eq!(b.diagonals.len(), 2);
        assert_eq!(b.to_dense(), op);

        let x = sample(d, 3);
        let mut left = DMatrix::zeros(d, d);
        b.mul_dense_acc(&x, &mut left);
        assert!((left - &op * &x).cmax() < 1e-13);
        let mut right = DMatrix::zeros(d, d);
        b.dense_mul_acc(&x, &mut right);
        assert!((right - &x * &op).cmax() < 1e-13);
        assert_eq!(b.adjoint().to_dense(), op.adjoint());
    }

    #[test]
    fn inf_norm_is_max_row_sum() {
        let op = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, -2.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert!((Banded::from_dense(&op).inf_norm() - 3.0).abs() < 1e-15);
    }
}
