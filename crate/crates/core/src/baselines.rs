//! Reference precoders: maximum ratio transmission, regularized zero-forcing
//! and sum-rate GPI without rate splitting.
//!
//! MRT and RZF give every private stream the same power and leave the common
//! and partial blocks empty.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpi_solver::{self, GpiReport, SolverConfig};
use crate::linalg::{CMatrix, CVector};
use crate::problem::{MessageId, MessageSet, Problem};
use crate::quotient_forms::{StackLayout, StackedPrecoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mrt,
    Rzf,
    SdmaGpi { use_error_cov: bool },
}

/// Stacks unit private directions with an equal power split into the
/// problem's layout. Zero directions stay zero.
fn equal_split(problem: &Problem, directions: Vec<CVector>) -> StackedPrecoder {
    let layout = StackLayout::for_problem(problem);
    let messages = problem.messages();
    let n = problem.num_antennas();
    let scale = 1.0 / (problem.num_users() as f64).sqrt();
    let mut blocks = vec![CVector::zeros(n); messages.num_messages()];
    for (k, d) in directions.into_iter().enumerate() {
        let norm = d.norm();
        if norm > 0.0 {
            blocks[messages.block_index(MessageId::Private(k)).expect("user block")] = d.scale(scale / norm);
        }
    }
    StackedPrecoder::from_blocks(&blocks, layout).expect("blocks match layout").normalized()
}

/// `f_k ∝ ĥ_k`.
pub fn mrt_precoders(problem: &Problem) -> StackedPrecoder {
    equal_split(problem, problem.channels().to_vec())
}

/// Stacks the channel estimates as columns of `Ĥ`.
fn channel_matrix(problem: &Problem) -> CMatrix {
    CMatrix::from_columns(problem.channels())
}

/// `f_k ∝ (Ĥ Ĥᴴ + (σ²/P) I)⁻¹ ĥ_k`, computed through the `K×K` push-through
/// form `Ĥ (Ĥᴴ Ĥ + (σ²/P) I)⁻¹`.
pub fn rzf_precoders(problem: &Problem) -> Result<StackedPrecoder> {
    let h = channel_matrix(problem);
    let k = problem.num_users();
    let gram = h.adjoint() * &h + CMatrix::identity(k, k).scale(problem.snr_inv());
    let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let f = &h * chol.inverse();
    Ok(equal_split(problem, f.column_iter().map(|c| c.into_owned()).collect()))
}

/// Runs the GPI engine on private streams only. With `use_error_cov = false`
/// the estimates are treated as exact inside the objective. The report lives
/// in the SDMA layout of `K` blocks.
pub fn sdma_gpi_solve(problem: &Problem, config: &SolverConfig, use_error_cov: bool) -> Result<GpiReport> {
    let sdma = problem.with_messages(MessageSet::sdma(problem.num_users()))?;
    let sdma = if use_error_cov { sdma } else { sdma.without_error_cov() };
    gpi_solver::solve(&sdma, config, None)
}

/// Precoder of a baseline, laid out in `problem`'s message structure.
pub fn baseline_precoders(kind: BaselineKind, problem: &Problem, config: &SolverConfig) -> Result<StackedPrecoder> {
    match kind {
        BaselineKind::Mrt => Ok(mrt_precoders(problem)),
        BaselineKind::Rzf => rzf_precoders(problem),
        BaselineKind::SdmaGpi { use_error_cov } => {
            let report = sdma_gpi_solve(problem, config, use_error_cov)?;
            report.fbar_star.embed_into(&StackLayout::for_problem(problem))
        }
    }
}
