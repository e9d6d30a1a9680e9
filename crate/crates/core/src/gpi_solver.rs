//! Generalized power iteration for the smoothed sum-rate problem.
//!
//! The first-order condition of `J` on the unit sphere reads
//! `A_dir(f̄) f̄ = B_dir(f̄) f̄`, where `A_dir = Σ_t w_t A_t / f̄ᴴA_t f̄` and
//! `B_dir = Σ_t w_t B_t / f̄ᴴB_t f̄` run over all rate terms `t` (softmin
//! weights for common and partial terms, `w = 1` for private terms). Each
//! iteration applies `f̄ ← B_dir⁻¹ A_dir f̄ / ‖·‖`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::problem::{MessageId, Problem};
use crate::quotient_forms::{self, BlockDiag, StackLayout, StackedPrecoder, TermForms};
use crate::rate_bounds::{self, RateBreakdown, SmoothingParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Mrt,
    Provided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iters_per_alpha: usize,
    pub alpha_init_low_snr: f64,
    pub alpha_init_high_snr: f64,
    pub snr_threshold_db: f64,
    /// Overrides the SNR-dependent initial `α` when set.
    pub alpha_init: Option<f64>,
    pub alpha_step: f64,
    pub alpha_max: f64,
    pub init_strategy: InitStrategy,
    /// Keep every iterate in the report (for trace audits).
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-5,
            max_iters_per_alpha: 50,
            alpha_init_low_snr: 0.1,
            alpha_init_high_snr: 0.5,
            snr_threshold_db: 15.0,
            alpha_init: None,
            alpha_step: 0.5,
            alpha_max: 10.0,
            init_strategy: InitStrategy::Mrt,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn initial_alpha(&self, snr_db: f64) -> f64 {
        self.alpha_init.unwrap_or(if snr_db < self.snr_threshold_db {
            self.alpha_init_low_snr
        } else {
            self.alpha_init_high_snr
        })
    }

    pub fn validate(&self, snr_db: f64) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha_step > 0.0) {
            return Err(Error::invalid(format!("alpha_step must be positive, got {}", self.alpha_step)));
        }
        if self.max_iters_per_alpha == 0 {
            return Err(Error::invalid("max_iters_per_alpha must be at least 1"));
        }
        let a0 = self.initial_alpha(snr_db);
        SmoothingParam::new(a0)?;
        if !(self.alpha_max >= a0) {
            return Err(Error::invalid(format!("alpha_max {} is below the initial α {a0}", self.alpha_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GpiReport {
    pub fbar_star: StackedPrecoder,
    /// `J` at the returned point and final `α`, from the SINR-form bounds.
    pub objective_bits: f64,
    /// `log₂ λ` at the returned point and final `α`, from the quotient forms.
    pub lambda_log2: f64,
    pub rate_breakdown: RateBreakdown,
    pub residual_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub alpha_final: f64,
    #[serde(skip)]
    pub iterates: Vec<StackedPrecoder>,
}

/// Softmin weights `w_k ∝ exp(log₂(r_k)/−α)`, summing to one.
pub fn softmin_weights(ratios: &[f64], alpha: SmoothingParam) -> Vec<f64> {
    let exps: Vec<f64> = ratios.iter().map(|r| -r.log2() / alpha.value()).collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = exps.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Per-term weights in `rate_terms` order: softmin weights within the common
/// term list and within each group's partial list, one for private terms.
fn term_weights(forms: &[TermForms], problem: &Problem, alpha: SmoothingParam) -> Vec<f64> {
    let messages = problem.messages();
    let mut weights = vec![1.0; forms.len()];
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); usize::from(messages.has_common()) + messages.num_groups()];
    for (i, t) in forms.iter().enumerate() {
        match t.message {
            MessageId::Common => lists[0].push(i),
            MessageId::Partial(g) => lists[usize::from(messages.has_common()) + g].push(i),
            MessageId::Private(_) => {}
        }
    }
    for list in lists {
        let ratios: Vec<f64> = list.iter().map(|&i| forms[i].ratio()).collect();
        for (&i, w) in list.iter().zip(softmin_weights(&ratios, alpha)) {
            weights[i] = w;
        }
    }
    weights
}

/// `log₂ λ` from the term forms: softmin of the log-ratios per shared message
/// plus every private log-ratio.
fn lambda_from_forms(forms: &[TermForms], problem: &Problem, alpha: SmoothingParam) -> f64 {
    let messages = problem.messages();
    let mut common = Vec::new();
    let mut partial = vec![Vec::new(); messages.num_groups()];
    let mut private = 0.0;
    for t in forms {
        match t.message {
            MessageId::Common => common.push(t.rate_bits()),
            MessageId::Partial(g) => partial[g].push(t.rate_bits()),
            MessageId::Private(_) => private += t.rate_bits(),
        }
    }
    let shared = if common.is_empty() { 0.0 } else { rate_bounds::softmin(&common, alpha) };
    shared + partial.iter().map(|v| rate_bounds::softmin(v, alpha)).sum::<f64>() + private
}

fn exact_sum_from_forms(forms: &[TermForms], problem: &Problem) -> f64 {
    let messages = problem.messages();
    let mut common = f64::INFINITY;
    let mut partial = vec![f64::INFINITY; messages.num_groups()];
    let mut private = 0.0;
    for t in forms {
        match t.message {
            MessageId::Common => common = common.min(t.rate_bits()),
            MessageId::Partial(g) => partial[g] = partial[g].min(t.rate_bits()),
            MessageId::Private(_) => private += t.rate_bits(),
        }
    }
    let common = if messages.has_common() { common } else { 0.0 };
    common + partial.iter().sum::<f64>() + private
}

/// `log₂ λ(f̄)`, evaluated entirely in the log domain.
pub fn lambda_log2(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<f64> {
    fbar.ensure_unit_norm()?;
    check_layout(fbar, problem)?;
    let forms = quotient_forms::term_forms(problem, fbar);
    Ok(lambda_from_forms(&forms, problem, alpha))
}

fn check_layout(fbar: &StackedPrecoder, problem: &Problem) -> Result<()> {
    if fbar.layout() != &StackLayout::for_problem(problem) {
        return Err(Error::invalid("stack layout does not match the problem"));
    }
    Ok(())
}

/// Block-diagonal KKT operators with the scalar `λ` prefactors dropped.
#[derive(Debug, Clone)]
pub struct KktOperators {
    pub a: BlockDiag,
    pub b: BlockDiag,
}

/// Per-problem data reused across iterations.
struct Engine<'a> {
    problem: &'a Problem,
    /// `ĥ_k ĥ_kᴴ + Φ_k`.
    signal_plus_error: Vec<CMatrix>,
    /// Block indices each term has cancelled, in `rate_terms` order.
    cancelled: Vec<Vec<usize>>,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem) -> Self {
        let messages = problem.messages();
        let signal_plus_error = (0..problem.num_users())
            .map(|k| linalg::outer(problem.channel(k)) + problem.error_cov(k))
            .collect();
        let cancelled = messages
            .rate_terms()
            .into_iter()
            .map(|(m, k)| {
                messages
                    .cancelled(m, k)
                    .expect("rate terms are decoder pairs")
                    .into_iter()
                    .filter_map(|c| messages.block_index(c))
                    .collect()
            })
            .collect();
        Engine {
            problem,
            signal_plus_error,
            cancelled,
        }
    }

    /// Builds `A_dir` and `B_dir` in `O(K N²)` per block set: every block
    /// starts from the shared sum `Σ_k c_k S_k` and removes the few user terms
    /// that cancelled it.
    fn operators(&self, forms: &[TermForms], alpha: SmoothingParam) -> KktOperators {
        let problem = self.problem;
        let n = problem.num_antennas();
        let num_blocks = problem.messages().num_messages();
        let num_users = problem.num_users();
        let weights = term_weights(forms, problem, alpha);

        let mut user_a = vec![0.0; num_users];
        let mut user_b = vec![0.0; num_users];
        let mut noise_a = 0.0;
        let mut noise_b = 0.0;
        // (block, user, coef_a, coef_b) removals and (block, user, coef_b) desired corrections
        let mut removals: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); num_blocks];
        let mut desired: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_blocks];
        for ((t, w), cancelled) in forms.iter().zip(&weights).zip(&self.cancelled) {
            let ca = w / t.num;
            let cb = w / t.den;
            user_a[t.user] += ca;
            user_b[t.user] += cb;
            noise_a += ca;
            noise_b += cb;
            for &b in cancelled {
                removals[b].push((t.user, ca, cb));
            }
            desired[t.desired_block].push((t.user, cb));
        }

        let mut base_a = CMatrix::identity(n, n).scale(noise_a * problem.snr_inv());
        let mut base_b = CMatrix::identity(n, n).scale(noise_b * problem.snr_inv());
        for k in 0..num_users {
            let s = &self.signal_plus_error[k];
            base_a.zip_apply(s, |x, y| *x += y.scale(user_a[k]));
            base_b.zip_apply(s, |x, y| *x += y.scale(user_b[k]));
        }

        let mut a_blocks = Vec::with_capacity(num_blocks);
        let mut b_blocks = Vec::with_capacity(num_blocks);
        for b in 0..num_blocks {
            let mut a = base_a.clone();
            let mut bm = base_b.clone();
            for &(k, ca, cb) in &removals[b] {
                let s = &self.signal_plus_error[k];
                a.zip_apply(s, |x, y| *x -= y.scale(ca));
                bm.zip_apply(s, |x, y| *x -= y.scale(cb));
            }
            for &(k, cb) in &desired[b] {
                let h = problem.channel(k);
                bm.ger(num_complex::Complex64::new(-cb, 0.0), h, &h.conjugate(), linalg::ONE);
            }
            a_blocks.push(linalg::hermitian_part(&a));
            b_blocks.push(linalg::hermitian_part(&bm));
        }
        KktOperators {
            a: BlockDiag { blocks: a_blocks },
            b: BlockDiag { blocks: b_blocks },
        }
    }

    fn step(&self, fbar: &StackedPrecoder, forms: &[TermForms], alpha: SmoothingParam) -> Result<StackedPrecoder> {
        let ops = self.operators(forms, alpha);
        let layout = fbar.layout();
        let n = layout.num_antennas();
        let mut y = CVector::zeros(layout.dim());
        for (b, (a, bm)) in ops.a.blocks.into_iter().zip(ops.b.blocks).enumerate() {
            let fb = fbar.vector().rows(b * n, n);
            let rhs = a * fb;
            let chol = Cholesky::new(bm).ok_or(Error::NotPositiveDefinite { block: b })?;
            y.rows_mut(b * n, n).copy_from(&chol.solve(&rhs));
        }
        let norm = y.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        let mut next = StackedPrecoder::new(y.unscale(norm), layout.clone())?;
        next.canonicalize_phase();
        Ok(next)
    }
}

pub fn build_kkt_operators(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<KktOperators> {
    fbar.ensure_unit_norm()?;
    check_layout(fbar, problem)?;
    let engine = Engine::new(problem);
    let forms = quotient_forms::term_forms(problem, fbar);
    Ok(engine.operators(&forms, alpha))
}

/// One update `f̄ ← B_dir⁻¹ A_dir f̄ / ‖·‖` with the phase canonicalized.
pub fn gpi_step(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<StackedPrecoder> {
    fbar.ensure_unit_norm()?;
    check_layout(fbar, problem)?;
    let engine = Engine::new(problem);
    let forms = quotient_forms::term_forms(problem, fbar);
    engine.step(fbar, &forms, alpha)
}

/// Matched-filter start: every block is a unit direction, equal power per
/// message. The common block follows `Σ_k ĥ_k`, a partial block the sum over
/// its group, a private block `ĥ_k`.
pub fn mrt_init(problem: &Problem) -> StackedPrecoder {
    let layout = StackLayout::for_problem(problem);
    let messages = problem.messages();
    let n = problem.num_antennas();
    let unit = |v: CVector| -> CVector {
        let norm = v.norm();
        if norm > 0.0 {
            v.unscale(norm)
        } else {
            let mut e = CVector::zeros(n);
            e[0] = linalg::ONE;
            e
        }
    };
    let sum_of = |users: &[usize]| -> CVector {
        users.iter().fold(CVector::zeros(n), |acc, &k| acc + problem.channel(k))
    };
    let blocks: Vec<CVector> = messages
        .messages()
        .into_iter()
        .map(|m| match m {
            MessageId::Common => {
                let all: Vec<usize> = (0..problem.num_users()).collect();
                let s = sum_of(&all);
                if s.norm() > 0.0 {
                    unit(s)
                } else {
                    unit(problem.channel(0).clone())
                }
            }
            MessageId::Partial(g) => unit(sum_of(&messages.groups()[g])),
            MessageId::Private(k) => unit(problem.channel(k).clone()),
        })
        .collect();
    let mut f = StackedPrecoder::from_blocks(&blocks, layout).expect("blocks match layout").normalized();
    f.canonicalize_phase();
    f
}

/// Whether `α` changes the objective: only when some message is shared.
fn alpha_matters(problem: &Problem) -> bool {
    let messages = problem.messages();
    (messages.has_common() && problem.num_users() > 1) || messages.groups().iter().any(|g| g.len() > 1)
}

/// Runs the power iteration with the `α` schedule.
///
/// If a run at one `α` does not reach `‖f̄₍t₎ − f̄₍t−1₎‖ < ε` within the
/// iteration budget, `α` grows by `alpha_step` and the run restarts from the
/// initial point. Past `alpha_max` the best iterate seen (by exact sum rate)
/// is returned with `converged = false`. When `α` has no effect on the
/// objective a restart would replay the same run, so the iteration instead
/// continues for the same total budget.
pub fn solve(problem: &Problem, config: &SolverConfig, init: Option<&StackedPrecoder>) -> Result<GpiReport> {
    let snr_db = problem.snr_db();
    config.validate(snr_db)?;
    let start = match (config.init_strategy, init) {
        (_, Some(f)) => {
            check_layout(f, problem)?;
            let mut f = f.normalized();
            f.ensure_unit_norm()?;
            f.canonicalize_phase();
            f
        }
        (InitStrategy::Mrt, None) => mrt_init(problem),
        (InitStrategy::Provided, None) => {
            return Err(Error::invalid("init_strategy = provided but no initial precoder was given"))
        }
    };

    let engine = Engine::new(problem);
    let alpha0 = config.initial_alpha(snr_db);
    let schedule_len = ((config.alpha_max - alpha0) / config.alpha_step + 1e-9).floor() as usize + 1;
    let restarts = alpha_matters(problem);

    let mut residual_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut alpha_history = Vec::new();
    let mut iterates = Vec::new();
    let mut best: Option<(f64, StackedPrecoder)> = None;
    let mut converged_at: Option<StackedPrecoder> = None;
    let mut alpha_value = alpha0;

    'schedule: for level in 0..schedule_len {
        alpha_value = alpha0 + level as f64 * config.alpha_step;
        let alpha = SmoothingParam::new(alpha_value)?;
        let budget = if restarts {
            config.max_iters_per_alpha
        } else {
            config.max_iters_per_alpha * schedule_len
        };
        let mut f = start.clone();
        let mut forms = quotient_forms::term_forms(problem, &f);
        for _ in 0..budget {
            let next = engine.step(&f, &forms, alpha)?;
            let residual = (next.vector() - f.vector()).norm();
            forms = quotient_forms::term_forms(problem, &next);
            let exact = exact_sum_from_forms(&forms, problem);
            residual_trace.push(residual);
            objective_trace.push(lambda_from_forms(&forms, problem, alpha));
            alpha_history.push(alpha_value);
            if config.record_iterates {
                iterates.push(next.clone());
            }
            if exact.is_finite() && best.as_ref().is_none_or(|(s, _)| exact > *s) {
                best = Some((exact, next.clone()));
            }
            f = next;
            if residual < config.epsilon {
                converged_at = Some(f);
                break 'schedule;
            }
        }
        if !restarts {
            break;
        }
    }

    let converged = converged_at.is_some();
    let fbar_star = match converged_at {
        Some(f) => f,
        None => best.map(|(_, f)| f).unwrap_or(start),
    };
    let alpha = SmoothingParam::new(alpha_value)?;
    Ok(GpiReport {
        objective_bits: rate_bounds::objective_j(&fbar_star, problem, alpha)?,
        lambda_log2: lambda_log2(&fbar_star, problem, alpha)?,
        rate_breakdown: rate_bounds::exact_breakdown(&fbar_star, problem)?,
        iterations: residual_trace.len(),
        residual_trace,
        objective_trace,
        alpha_history,
        converged,
        alpha_final: alpha_value,
        iterates,
        fbar_star,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedPrecoders {
    pub messages: Vec<MessageId>,
    pub precoders: Vec<CVector>,
    /// `‖f_m‖²` per message; sums to one for a unit stack.
    pub power_fractions: Vec<f64>,
}

pub fn extract_precoders(fbar: &StackedPrecoder) -> ExtractedPrecoders {
    let precoders = fbar.blocks();
    ExtractedPrecoders {
        messages: fbar.layout().messages().messages(),
        power_fractions: precoders.iter().map(|f| f.norm_squared()).collect(),
        precoders,
    }
}
