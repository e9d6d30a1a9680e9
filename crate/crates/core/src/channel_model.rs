//! One-ring spatial covariance, Karhunen-Loève channel sampling and the
//! LMMSE CSIT error model.
//!
//! The base station carries a uniform circular array whose adjacent elements
//! sit half a wavelength apart. A user seen under angle of arrival `θ` with
//! angular spread `Δ` has covariance
//!
//! ```text
//! [R]_{n,m} = 1/(2Δ) ∫_{θ-Δ}^{θ+Δ} exp(-j 2π/ψ · [cos x, sin x]·(r_n - r_m)) dx
//! ```
//!
//! evaluated with the composite Simpson rule. Positions are expressed in
//! wavelengths (`ψ = 1`).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

/// Default number of Simpson sub-intervals.
pub const DEFAULT_QUAD_POINTS: usize = 200;
/// Default relative eigenvalue cut-off for [`kl_factorize`].
pub const DEFAULT_KL_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneRingGeometry {
    pub num_antennas: usize,
    /// Angle of arrival in radians.
    pub aoa: f64,
    /// Half-width of the angular spread in radians, `0 < Δ ≤ π`.
    pub angular_spread: f64,
    pub wavelength: f64,
}

impl OneRingGeometry {
    pub fn new(num_antennas: usize, aoa: f64, angular_spread: f64) -> Result<Self> {
        let geom = OneRingGeometry {
            num_antennas,
            aoa,
            angular_spread,
            wavelength: 1.0,
        };
        geom.validate()?;
        Ok(geom)
    }

    fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::invalid("one-ring geometry needs at least one antenna"));
        }
        if !(self.angular_spread > 0.0 && self.angular_spread <= PI) {
            return Err(Error::invalid(format!(
                "angular spread must lie in (0, π], got {}",
                self.angular_spread
            )));
        }
        if !self.aoa.is_finite() || !(self.wavelength > 0.0) {
            return Err(Error::invalid("angle of arrival and wavelength must be finite and positive"));
        }
        Ok(())
    }

    /// `D = 0.5 / sqrt((1 - cos(2π/N))² + sin²(2π/N))`, the array radius in
    /// wavelengths. A single antenna sits at the origin.
    pub fn radius_factor(&self) -> f64 {
        if self.num_antennas == 1 {
            return 0.0;
        }
        let step = 2.0 * PI / self.num_antennas as f64;
        0.5 / ((1.0 - step.cos()).powi(2) + step.sin().powi(2)).sqrt()
    }

    /// Antenna positions `r_n = ψD·(cos(2π(n-1)/N), sin(2π(n-1)/N))`.
    pub fn antenna_positions(&self) -> Vec<[f64; 2]> {
        let radius = self.wavelength * self.radius_factor();
        let n = self.num_antennas as f64;
        (0..self.num_antennas)
            .map(|i| {
                let angle = 2.0 * PI * i as f64 / n;
                [radius * angle.cos(), radius * angle.sin()]
            })
            .collect()
    }

    /// Array response `a(x)_n = exp(-j 2π/ψ Ψ(x)·r_n)` for a plane wave from `x`.
    pub fn steering_vector(&self, x: f64) -> CVector {
        let k = 2.0 * PI / self.wavelength;
        let positions = self.antenna_positions();
        CVector::from_iterator(
            self.num_antennas,
            positions
                .iter()
                .map(|r| Complex64::from_polar(1.0, -k * (x.cos() * r[0] + x.sin() * r[1]))),
        )
    }
}

/// Hermitian PSD spatial covariance of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    matrix: CMatrix,
}

impl SpatialCovariance {
    /// Wraps an arbitrary Hermitian PSD matrix; the input is symmetrized.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        Ok(SpatialCovariance {
            matrix: linalg::hermitian_part(&matrix),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `R = U Λ Uᴴ` restricted to the retained eigenpairs.
#[derive(Debug, Clone)]
pub struct KlFactor {
    pub basis: CMatrix,
    pub eigenvalues: Vec<f64>,
}

impl KlFactor {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lambda);
        }
        scaled * self.basis.adjoint()
    }
}

/// True channel, its transmitter-side estimate and the estimation error
/// covariance for one user.
#[derive(Debug, Clone)]
pub struct UserChannelState {
    pub h: CVector,
    pub h_hat: CVector,
    pub error_cov: CMatrix,
    pub covariance: SpatialCovariance,
}

/// Integrates the one-ring kernel with `quad_points` Simpson sub-intervals.
pub fn build_one_ring_covariance(geom: &OneRingGeometry, quad_points: usize) -> Result<SpatialCovariance> {
    geom.validate()?;
    if quad_points < 8 || !quad_points.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "Simpson quadrature needs an even number of at least 8 sub-intervals, got {quad_points}"
        )));
    }
    let n = geom.num_antennas;
    let positions = geom.antenna_positions();
    let k = 2.0 * PI / geom.wavelength;
    let lower = geom.aoa - geom.angular_spread;
    let step = 2.0 * geom.angular_spread / quad_points as f64;

    let nodes: Vec<(f64, f64, f64)> = (0..=quad_points)
        .map(|i| {
            let weight = if i == 0 || i == quad_points {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let x = lower + i as f64 * step;
            (weight, x.cos(), x.sin())
        })
        .collect();
    let norm = step / 3.0 / (2.0 * geom.angular_spread);

    let mut r = CMatrix::identity(n, n);
    for row in 0..n {
        for col in (row + 1)..n {
            let dx = positions[row][0] - positions[col][0];
            let dy = positions[row][1] - positions[col][1];
            let mut acc = Complex64::new(0.0, 0.0);
            for &(w, c, s) in &nodes {
                acc += Complex64::from_polar(w, -k * (c * dx + s * dy));
            }
            let entry = acc * norm;
            r[(row, col)] = entry;
            r[(col, row)] = entry.conj();
        }
    }
    Ok(SpatialCovariance { matrix: r })
}

/// Eigendecomposition keeping eigenvalues above `rel_tol · λ_max`.
pub fn kl_factorize(cov: &SpatialCovariance, rel_tol: f64) -> Result<KlFactor> {
    let r = cov.matrix();
    if !linalg::is_finite(r) {
        return Err(Error::NonFinite);
    }
    let (values, vectors) = linalg::hermitian_eigen(r);
    let lambda_max = values.first().copied().unwrap_or(0.0);
    let keep = if lambda_max > 0.0 {
        values.iter().take_while(|&&v| v > rel_tol * lambda_max).count()
    } else {
        0
    };
    Ok(KlFactor {
        basis: vectors.columns(0, keep).into_owned(),
        eigenvalues: values[..keep].to_vec(),
    })
}

/// Draws `h = U Λ^{1/2} g` with `g ~ CN(0, I_r)`.
pub fn sample_channel<R: Rng + ?Sized>(kl: &KlFactor, rng: &mut R) -> CVector {
    let mut g = linalg::complex_gaussian(rng, kl.rank());
    for (gi, &lambda) in g.iter_mut().zip(&kl.eigenvalues) {
        *gi *= lambda.sqrt();
    }
    &kl.basis * g
}

/// `Φ = R - R (R + σ²/τp · I)⁻¹ R`.
///
/// Evaluated in the eigenbasis of `R`, where each eigenvalue `λ` maps to
/// `λ s / (λ + s)` with `s = σ²/τp`. The result is exactly PSD and dominated
/// by `R`.
pub fn lmmse_error_covariance(cov: &SpatialCovariance, tau_p: f64, sigma2: f64) -> Result<CMatrix> {
    if !(tau_p > 0.0) || !tau_p.is_finite() {
        return Err(Error::invalid(format!("training budget τp must be positive, got {tau_p}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("noise variance must be positive, got {sigma2}")));
    }
    let r = cov.matrix();
    if !linalg::is_finite(r) {
        return Err(Error::NonFinite);
    }
    let shift = sigma2 / tau_p;
    let (values, vectors) = linalg::hermitian_eigen(r);
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let lambda = lambda.max(0.0);
        scaled.column_mut(j).scale_mut(lambda * shift / (lambda + shift));
    }
    Ok(linalg::hermitian_part(&(scaled * vectors.adjoint())))
}

/// PSD square root factor `L` with `L Lᴴ = Φ`, built from the eigendecomposition.
pub fn psd_sqrt_factor(phi: &CMatrix) -> CMatrix {
    let (values, mut vectors) = linalg::hermitian_eigen(phi);
    for (j, &lambda) in values.iter().enumerate() {
        vectors.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
    }
    vectors
}

/// Draws `e ~ CN(0, Φ)` and returns the estimate `ĥ = h - e`.
pub fn sample_csit<R: Rng + ?Sized>(
    h: &CVector,
    error_cov: &CMatrix,
    covariance: &SpatialCovariance,
    rng: &mut R,
) -> Result<UserChannelState> {
    let n = h.len();
    if error_cov.nrows() != n || error_cov.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: error_cov.nrows(),
        });
    }
    let factor = psd_sqrt_factor(error_cov);
    let e = &factor * linalg::complex_gaussian(rng, n);
    Ok(UserChannelState {
        h: h.clone(),
        h_hat: h - e,
        error_cov: error_cov.clone(),
        covariance: covariance.clone(),
    })
}
