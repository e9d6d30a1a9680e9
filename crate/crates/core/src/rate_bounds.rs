//! Closed-form spectral-efficiency lower bounds under imperfect CSIT and the
//! LogSumExp-smoothed sum-rate objective.
//!
//! All rates are in bits/s/Hz. The bounds are written in SINR form, treating
//! the CSIT error of every non-cancelled stream as extra Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVector};
use crate::problem::{MessageId, Problem};
use crate::quotient_forms::StackedPrecoder;

/// Smoothing parameter `α` of the LogSumExp minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("α must be positive and finite, got {alpha}")));
        }
        Ok(SmoothingParam(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub common_rate: f64,
    pub partial_rates: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub sum: f64,
}

/// Every per-user bound of one stack, before any minimum is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRates {
    /// Common bound seen by each user; empty without a common message.
    pub common: Vec<f64>,
    /// For each group, the partial bound of each member in group order.
    pub partial: Vec<Vec<f64>>,
    pub private: Vec<f64>,
}

fn check_blocks(precoders: &[CVector], problem: &Problem) -> Result<()> {
    let m = problem.messages().num_messages();
    if precoders.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: precoders.len(),
        });
    }
    let n = problem.num_antennas();
    for f in precoders {
        if f.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.len() });
        }
    }
    Ok(())
}

fn check_user(user: usize, problem: &Problem) -> Result<()> {
    if user >= problem.num_users() {
        return Err(Error::invalid(format!("user {user} out of range for K = {}", problem.num_users())));
    }
    Ok(())
}

fn sinr_bits(signal: f64, interference_plus_noise: f64) -> f64 {
    (1.0 + signal / interference_plus_noise).log2()
}

/// Received power `|ĥ_kᴴ f|²` and error leakage `fᴴ Φ_k f` of one precoder.
fn gain_and_leak(problem: &Problem, user: usize, f: &CVector) -> (f64, f64) {
    (
        linalg::inner_sq(problem.channel(user), f),
        linalg::quad_form(problem.error_cov(user), f),
    )
}

/// Common-message bound at user `user`. With groups present the partial
/// commons are all treated as interference.
pub fn common_rate_bound(user: usize, precoders: &[CVector], problem: &Problem) -> Result<f64> {
    check_blocks(precoders, problem)?;
    check_user(user, problem)?;
    let messages = problem.messages();
    let Some(c) = messages.block_index(MessageId::Common) else {
        return Err(Error::invalid("message set has no common message"));
    };
    let (signal, mut den) = gain_and_leak(problem, user, &precoders[c]);
    for i in 0..messages.num_groups() {
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Partial(i)).unwrap()]);
        den += g + l;
    }
    for j in 0..problem.num_users() {
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Private(j)).unwrap()]);
        den += g + l;
    }
    Ok(sinr_bits(signal, den + problem.snr_inv()))
}

/// Partial common bound of group `group` at member `user`. The common message
/// is already cancelled, so it contributes neither power nor error.
pub fn partial_common_rate_bound(group: usize, user: usize, precoders: &[CVector], problem: &Problem) -> Result<f64> {
    check_blocks(precoders, problem)?;
    let messages = problem.messages();
    if group >= messages.num_groups() {
        return Err(Error::invalid(format!("group {group} out of range")));
    }
    if !messages.groups()[group].contains(&user) {
        return Err(Error::NotADecoder {
            message: MessageId::Partial(group).to_string(),
            user,
        });
    }
    let mut signal = 0.0;
    let mut den = 0.0;
    for i in 0..messages.num_groups() {
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Partial(i)).unwrap()]);
        if i == group {
            signal = g;
            den += l;
        } else {
            den += g + l;
        }
    }
    for j in 0..problem.num_users() {
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Private(j)).unwrap()]);
        den += g + l;
    }
    Ok(sinr_bits(signal, den + problem.snr_inv()))
}

/// Private bound of user `user` after removing the common message and, if it
/// belongs to a group, its own partial common message.
pub fn private_rate_bound(user: usize, precoders: &[CVector], problem: &Problem) -> Result<f64> {
    check_blocks(precoders, problem)?;
    check_user(user, problem)?;
    let messages = problem.messages();
    let own_group = messages.group_of(user);
    let mut den = 0.0;
    for i in 0..messages.num_groups() {
        if Some(i) == own_group {
            continue;
        }
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Partial(i)).unwrap()]);
        den += g + l;
    }
    let mut signal = 0.0;
    for j in 0..problem.num_users() {
        let (g, l) = gain_and_leak(problem, user, &precoders[messages.block_index(MessageId::Private(j)).unwrap()]);
        if j == user {
            signal = g;
            den += l;
        } else {
            den += g + l;
        }
    }
    Ok(sinr_bits(signal, den + problem.snr_inv()))
}

/// Smooth minimum `−α ln((1/n) Σ exp(−vᵢ/α))`, which lies in
/// `[min v, min v + α ln n]`.
pub fn softmin(values: &[f64], alpha: SmoothingParam) -> f64 {
    assert!(!values.is_empty(), "softmin of an empty list");
    let a = alpha.value();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean: f64 = values.iter().map(|v| (-(v - min) / a).exp()).sum::<f64>() / values.len() as f64;
    min - a * mean.ln()
}

/// Evaluates every per-user bound for the given per-message precoders.
pub fn term_rates(precoders: &[CVector], problem: &Problem) -> Result<TermRates> {
    check_blocks(precoders, problem)?;
    let messages = problem.messages();
    let k = problem.num_users();
    let common = if messages.has_common() {
        (0..k)
            .map(|u| common_rate_bound(u, precoders, problem))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let partial = messages
        .groups()
        .iter()
        .enumerate()
        .map(|(i, members)| {
            members
                .iter()
                .map(|&u| partial_common_rate_bound(i, u, precoders, problem))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let private = (0..k)
        .map(|u| private_rate_bound(u, precoders, problem))
        .collect::<Result<_>>()?;
    Ok(TermRates { common, partial, private })
}

fn unit_stack_rates(fbar: &StackedPrecoder, problem: &Problem) -> Result<TermRates> {
    fbar.ensure_unit_norm()?;
    if fbar.layout().messages() != problem.messages() || fbar.layout().num_antennas() != problem.num_antennas() {
        return Err(Error::invalid("stack layout does not match the problem"));
    }
    term_rates(&fbar.blocks(), problem)
}

impl TermRates {
    pub fn smoothed_sum(&self, alpha: SmoothingParam) -> f64 {
        let common = if self.common.is_empty() { 0.0 } else { softmin(&self.common, alpha) };
        let partial: f64 = self.partial.iter().map(|v| softmin(v, alpha)).sum();
        common + partial + self.private.iter().sum::<f64>()
    }

    pub fn breakdown(&self) -> RateBreakdown {
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let common_rate = if self.common.is_empty() { 0.0 } else { min(&self.common) };
        let partial_rates: Vec<f64> = self.partial.iter().map(|v| min(v)).collect();
        let private_rates = self.private.clone();
        let sum = common_rate + partial_rates.iter().sum::<f64>() + private_rates.iter().sum::<f64>();
        RateBreakdown {
            common_rate,
            partial_rates,
            private_rates,
            sum,
        }
    }
}

/// Smoothed objective `J`: softmin over users of the common bound, softmin
/// over members of each partial bound, plus every private bound.
pub fn objective_j(fbar: &StackedPrecoder, problem: &Problem, alpha: SmoothingParam) -> Result<f64> {
    Ok(unit_stack_rates(fbar, problem)?.smoothed_sum(alpha))
}

/// Achieved rates with the true minimum over decoders.
pub fn exact_breakdown(fbar: &StackedPrecoder, problem: &Problem) -> Result<RateBreakdown> {
    Ok(unit_stack_rates(fbar, problem)?.breakdown())
}
