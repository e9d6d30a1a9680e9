//! Small complex linear-algebra helpers shared by the channel model and the solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Real part of `xᴴ M x`.
pub fn quad_form(m: &CMatrix, x: &CVector) -> f64 {
    x.dotc(&(m * x)).re
}

/// `|aᴴ b|²`.
pub fn inner_sq(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Outer product `v vᴴ`.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Vector of i.i.d. CN(0, 1) entries, each drawn as `(x + j y)/√2`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen(m);
    values.last().copied().unwrap_or(0.0)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen(m);
    values.first().copied().unwrap_or(0.0)
}
