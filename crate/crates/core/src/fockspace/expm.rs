use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Spectral form of an anti-Hermitian generator `G`, stored as the
/// eigendecomposition of the Hermitian matrix `iG`.
///
/// `exp(sG) = V exp(-i s Λ) V†` stays unitary up to roundoff for any real `s`.
#[derive(Debug, Clone)]
pub struct SpectralGenerator {
    vectors: DMatrix<Complex64>,
    values: DVector<f64>,
}

impl SpectralGenerator {
    pub fn new(generator: &DMatrix<Complex64>) -> Self {
        let mut h = generator * Complex64::i();
        // symmetrize away roundoff so the Hermitian solver sees an exact input
        let ht = h.adjoint();
        h = (h + ht) * Complex64::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `exp(s G)`.
    pub fn exp(&self, s: f64) -> DMatrix<Complex64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            let phase = Complex64::from_polar(1.0, -s * self.values[k]);
            col *= phase;
        }
        scaled * self.vectors.adjoint()
    }
}
