//! Independent checks for the solver: finite-difference gradients on the unit
//! sphere, brute-force search and a dense re-derivation of the KKT update.

use nalgebra::LU;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gpi_solver;
use crate::linalg::{self, CMatrix, CVector};
use crate::problem::{MessageId, Problem};
use crate::quotient_forms::{self, StackLayout, StackedPrecoder};
use crate::rate_bounds::SmoothingParam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpec {
    pub step: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step: 1e-5 }
    }
}

/// Real coordinates `[Re x₀, Im x₀, Re x₁, …]`.
fn to_real(x: &CVector) -> Vec<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Central-difference gradient of `j` over the `2MN` real coordinates of
/// `fbar`. Each perturbed point is renormalized before evaluation.
pub fn fd_gradient<F>(j: F, fbar: &StackedPrecoder, spec: FdSpec) -> Result<Vec<f64>>
where
    F: Fn(&StackedPrecoder) -> Result<f64>,
{
    if !(spec.step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let h = spec.step;
    let base = fbar.vector();
    let mut grad = Vec::with_capacity(2 * base.len());
    for i in 0..base.len() {
        for delta in [num_complex::Complex64::new(h, 0.0), num_complex::Complex64::new(0.0, h)] {
            let eval = |sign: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += delta * sign;
                j(&StackedPrecoder::new(v, fbar.layout().clone())?.normalized())
            };
            grad.push((eval(1.0)? - eval(-1.0)?) / (2.0 * h));
        }
    }
    Ok(grad)
}

/// Removes the radial component `(g·x) x` of a real gradient at the unit point `x`.
pub fn project_tangent(grad: &[f64], fbar: &StackedPrecoder) -> Vec<f64> {
    let x = to_real(fbar.vector());
    let radial: f64 = grad.iter().zip(&x).map(|(g, x)| g * x).sum();
    grad.iter().zip(&x).map(|(g, x)| g - radial * x).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm of the projected finite-difference gradient of `J` at `fbar`.
pub fn projected_gradient_norm(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam, spec: FdSpec) -> Result<f64> {
    let j = |f: &StackedPrecoder| crate::rate_bounds::objective_j(f, problem, alpha);
    Ok(norm(&project_tangent(&fd_gradient(j, fbar, spec)?, fbar)))
}

fn random_unit<R: Rng + ?Sized>(layout: &StackLayout, rng: &mut R) -> StackedPrecoder {
    StackedPrecoder::new(linalg::complex_gaussian(rng, layout.dim()), layout.clone())
        .expect("dimension matches")
        .normalized()
}

fn objective(problem: &Problem, alpha: SmoothingParam, f: &StackedPrecoder) -> f64 {
    gpi_solver::lambda_log2(f, problem, alpha).unwrap_or(f64::NEG_INFINITY)
}

/// Best `J` over `samples` isotropic unit stacks, then refined by coordinate
/// moves of shrinking size for `polish_steps` sweeps.
pub fn random_search<R: Rng + ?Sized>(
    problem: &Problem,
    alpha: SmoothingParam,
    samples: usize,
    polish_steps: usize,
    rng: &mut R,
) -> Result<(StackedPrecoder, f64)> {
    random_search_multi(problem, alpha, samples, polish_steps, 1, rng)
}

/// Like [`random_search`] but polishes the `starts` best samples and keeps
/// the best polished result, so one poor basin cannot hide a better one.
pub fn random_search_multi<R: Rng + ?Sized>(
    problem: &Problem,
    alpha: SmoothingParam,
    samples: usize,
    polish_steps: usize,
    starts: usize,
    rng: &mut R,
) -> Result<(StackedPrecoder, f64)> {
    if samples == 0 || starts == 0 {
        return Err(Error::invalid("random search needs at least one sample and one start"));
    }
    let layout = StackLayout::for_problem(problem);
    // kept sorted best-first
    let mut top: Vec<(f64, StackedPrecoder)> = Vec::with_capacity(starts + 1);
    for _ in 0..samples {
        let f = random_unit(&layout, rng);
        let j = objective(problem, alpha, &f);
        if top.len() < starts || j > top[top.len() - 1].0 {
            let at = top.partition_point(|(t, _)| *t >= j);
            top.insert(at, (j, f));
            top.truncate(starts);
        }
    }

    let mut best: Option<(StackedPrecoder, f64)> = None;
    for (j, f) in top {
        let (f, j) = polish(problem, alpha, &layout, f, j, polish_steps)?;
        if best.as_ref().is_none_or(|(_, b)| j > *b) {
            best = Some((f, j));
        }
    }
    Ok(best.expect("at least one start"))
}

fn polish(
    problem: &Problem,
    alpha: SmoothingParam,
    layout: &StackLayout,
    mut best: StackedPrecoder,
    mut best_j: f64,
    polish_steps: usize,
) -> Result<(StackedPrecoder, f64)> {
    let mut step = 0.05;
    for _ in 0..polish_steps {
        let mut improved = false;
        for i in 0..layout.dim() {
            for delta in [
                num_complex::Complex64::new(step, 0.0),
                num_complex::Complex64::new(-step, 0.0),
                num_complex::Complex64::new(0.0, step),
                num_complex::Complex64::new(0.0, -step),
            ] {
                let mut v = best.vector().clone();
                v[i] += delta;
                let f = StackedPrecoder::new(v, layout.clone())?.normalized();
                let j = objective(problem, alpha, &f);
                if j > best_j {
                    best = f;
                    best_j = j;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok((best, best_j))
}

/// Dense `(A_dir, B_dir)` assembled from full `MN×MN` pair matrices.
pub fn dense_kkt_operators(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<(CMatrix, CMatrix)> {
    fbar.ensure_unit_norm()?;
    let pairs = quotient_forms::build_all_pairs(problem)?;
    let x = fbar.vector();
    let dense: Vec<(CMatrix, CMatrix)> = pairs.iter().map(|p| (p.a.to_dense(), p.b.to_dense())).collect();
    let forms: Vec<(f64, f64)> = dense
        .iter()
        .map(|(a, b)| (linalg::quad_form(a, x), linalg::quad_form(b, x)))
        .collect();

    // softmin weights per shared message, computed directly from the ratios
    let mut weights = vec![1.0; pairs.len()];
    let shared: Vec<MessageId> = problem
        .messages()
        .messages()
        .into_iter()
        .filter(|m| !matches!(m, MessageId::Private(_)))
        .collect();
    for message in shared {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].message == message).collect();
        let logits: Vec<f64> = idx.iter().map(|&i| -(forms[i].0 / forms[i].1).log2() / alpha.value()).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|l| (l - top).exp()).sum();
        for (&i, l) in idx.iter().zip(&logits) {
            weights[i] = (l - top).exp() / total;
        }
    }

    let dim = x.len();
    let mut a_dir = CMatrix::zeros(dim, dim);
    let mut b_dir = CMatrix::zeros(dim, dim);
    for (((a, b), (qa, qb)), w) in dense.iter().zip(&forms).zip(&weights) {
        a_dir += a.scale(w / qa);
        b_dir += b.scale(w / qb);
    }
    Ok((a_dir, b_dir))
}

/// `B_dir⁻¹ A_dir f̄ / ‖·‖` by a dense LU solve, phase-aligned to `fbar`.
pub fn dense_step(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<CVector> {
    let (a, b) = dense_kkt_operators(fbar, problem, alpha)?;
    let rhs = &a * fbar.vector();
    let y = LU::new(b).solve(&rhs).ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let y = y.unscale(y.norm());
    let overlap = y.dotc(fbar.vector());
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { linalg::ONE };
    Ok(y * phase)
}

/// `‖B⁻¹A f̄/‖B⁻¹A f̄‖ − f̄‖` after phase alignment, all in dense arithmetic.
pub fn dense_fixed_point_check(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<f64> {
    Ok((dense_step(fbar, problem, alpha)? - fbar.vector()).norm())
}
