//! Stacked precoder layout and the Rayleigh-quotient form of every rate term.
//!
//! With all message precoders stacked into one unit-norm vector `f̄`, each
//! rate bound becomes `log₂(f̄ᴴ A f̄ / f̄ᴴ B f̄)` for a block-diagonal pair
//! `(A, B)`. For a term decoded by user `k`, `A` carries `ĥ_k ĥ_kᴴ + Φ_k` on
//! every block that `k` has not already cancelled by SIC plus `σ²/P · I`, and
//! `B = A - embed_desired(ĥ_k ĥ_kᴴ)`.

use std::ops::Range;

use num_complex::Complex64;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::problem::{MessageId, MessageSet, Problem};

/// Tolerance on `‖f̄‖ = 1` for evaluations that assume the unit sphere.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackLayout {
    num_antennas: usize,
    messages: MessageSet,
}

impl StackLayout {
    pub fn new(num_antennas: usize, messages: MessageSet) -> Self {
        StackLayout { num_antennas, messages }
    }

    pub fn for_problem(problem: &Problem) -> Self {
        StackLayout::new(problem.num_antennas(), problem.messages().clone())
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn messages(&self) -> &MessageSet {
        &self.messages
    }

    pub fn num_blocks(&self) -> usize {
        self.messages.num_messages()
    }

    pub fn dim(&self) -> usize {
        self.num_blocks() * self.num_antennas
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        block * self.num_antennas..(block + 1) * self.num_antennas
    }

    pub fn block_of(&self, message: MessageId) -> Option<usize> {
        self.messages.block_index(message)
    }
}

/// The stacked precoder `f̄ = [f_c; f_{c,1}; …; f_{c,G}; f_1; …; f_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPrecoder {
    vector: CVector,
    layout: StackLayout,
}

impl StackedPrecoder {
    pub fn new(vector: CVector, layout: StackLayout) -> Result<Self> {
        if vector.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: vector.len(),
            });
        }
        Ok(StackedPrecoder { vector, layout })
    }

    pub fn from_blocks(blocks: &[CVector], layout: StackLayout) -> Result<Self> {
        if blocks.len() != layout.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: layout.num_blocks(),
                got: blocks.len(),
            });
        }
        let n = layout.num_antennas();
        let mut vector = CVector::zeros(layout.dim());
        for (b, block) in blocks.iter().enumerate() {
            if block.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: block.len() });
            }
            vector.rows_mut(b * n, n).copy_from(block);
        }
        Ok(StackedPrecoder { vector, layout })
    }

    pub fn zeros(layout: StackLayout) -> Self {
        StackedPrecoder {
            vector: CVector::zeros(layout.dim()),
            layout,
        }
    }

    pub fn vector(&self) -> &CVector {
        &self.vector
    }

    pub fn into_vector(self) -> CVector {
        self.vector
    }

    pub fn layout(&self) -> &StackLayout {
        &self.layout
    }

    pub fn block(&self, block: usize) -> CVector {
        let n = self.layout.num_antennas();
        self.vector.rows(block * n, n).into_owned()
    }

    pub fn blocks(&self) -> Vec<CVector> {
        (0..self.layout.num_blocks()).map(|b| self.block(b)).collect()
    }

    pub fn message(&self, message: MessageId) -> Option<CVector> {
        self.layout.block_of(message).map(|b| self.block(b))
    }

    pub fn norm(&self) -> f64 {
        self.vector.norm()
    }

    pub fn ensure_unit_norm(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NormViolation(norm));
        }
        Ok(())
    }

    pub fn normalized(&self) -> Self {
        let norm = self.norm();
        StackedPrecoder {
            vector: if norm > 0.0 { self.vector.unscale(norm) } else { self.vector.clone() },
            layout: self.layout.clone(),
        }
    }

    /// Multiplies every entry by `e^{jφ}`.
    pub fn rotated(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        StackedPrecoder {
            vector: self.vector.map(|z| z * rot),
            layout: self.layout.clone(),
        }
    }

    /// Rotates the global phase so that the largest-magnitude entry is real
    /// and nonnegative. The first entry wins ties.
    pub fn canonicalize_phase(&mut self) {
        let mut best = 0;
        let mut best_mag = -1.0;
        for (i, z) in self.vector.iter().enumerate() {
            let mag = z.norm_sqr();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        if best_mag > 0.0 {
            let pivot = self.vector[best];
            let rot = pivot.conj() / pivot.norm();
            self.vector.apply(|z| *z *= rot);
            self.vector[best] = Complex64::new(self.vector[best].norm(), 0.0);
        }
    }

    /// Same blocks re-laid into `target`, which must contain every message of
    /// this layout. Blocks absent here are zero.
    pub fn embed_into(&self, target: &StackLayout) -> Result<Self> {
        if target.num_antennas() != self.layout.num_antennas() {
            return Err(Error::DimensionMismatch {
                expected: target.num_antennas(),
                got: self.layout.num_antennas(),
            });
        }
        let mut out = StackedPrecoder::zeros(target.clone());
        let n = target.num_antennas();
        for message in self.layout.messages().messages() {
            let src = self.layout.block_of(message).expect("own message");
            let dst = target.block_of(message).ok_or_else(|| {
                Error::invalid(format!("target layout has no block for {message}"))
            })?;
            out.vector.rows_mut(dst * n, n).copy_from(&self.vector.rows(src * n, n));
        }
        Ok(out)
    }
}

impl Serialize for StackedPrecoder {
    /// `{"num_antennas", "messages", "blocks"}` with every entry as `[re, im]`.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks: Vec<Vec<[f64; 2]>> = self
            .blocks()
            .iter()
            .map(|b| b.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        let messages: Vec<String> = self.layout.messages().messages().iter().map(|m| m.to_string()).collect();
        let mut s = serializer.serialize_struct("StackedPrecoder", 3)?;
        s.serialize_field("num_antennas", &self.layout.num_antennas())?;
        s.serialize_field("messages", &messages)?;
        s.serialize_field("blocks", &blocks)?;
        s.end()
    }
}

/// Block-diagonal matrix stored as its diagonal `N×N` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiag {
    pub blocks: Vec<CMatrix>,
}

impl BlockDiag {
    /// `xᴴ M x`, real part and imaginary residue.
    pub fn quad_form(&self, x: &CVector) -> Complex64 {
        let n = self.blocks.first().map_or(0, |b| b.nrows());
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let xb = x.rows(b * n, n);
                xb.dotc(&(m * xb))
            })
            .sum()
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.blocks.first().map_or(0, |b| b.nrows());
        let dim = n * self.blocks.len();
        let mut out = CMatrix::zeros(dim, dim);
        for (b, m) in self.blocks.iter().enumerate() {
            out.view_mut((b * n, b * n), (n, n)).copy_from(m);
        }
        out
    }
}

/// The `(A, B)` pair whose quotient gives one rate term.
#[derive(Debug, Clone)]
pub struct QuotientPair {
    pub a: BlockDiag,
    pub b: BlockDiag,
    pub message: MessageId,
    pub desired_block: usize,
    pub owner_user: usize,
}

/// Builds `(A, B)` for `message` as decoded by `user`.
pub fn build_pair(message: MessageId, user: usize, problem: &Problem) -> Result<QuotientPair> {
    let messages = problem.messages();
    let cancelled = messages.cancelled(message, user)?;
    let cancelled_blocks: Vec<usize> = cancelled
        .iter()
        .filter_map(|&m| messages.block_index(m))
        .collect();
    let desired_block = messages.block_index(message).expect("decoded message has a block");
    let n = problem.num_antennas();
    let h = problem.channel(user);
    let hh = linalg::outer(h);
    let signal_plus_error = &hh + problem.error_cov(user);
    let noise = CMatrix::identity(n, n).scale(problem.snr_inv());

    let a_blocks: Vec<CMatrix> = (0..messages.num_messages())
        .map(|b| {
            if cancelled_blocks.contains(&b) {
                noise.clone()
            } else {
                &signal_plus_error + &noise
            }
        })
        .collect();
    let mut b_blocks = a_blocks.clone();
    b_blocks[desired_block] -= &hh;
    Ok(QuotientPair {
        a: BlockDiag { blocks: a_blocks },
        b: BlockDiag { blocks: b_blocks },
        message,
        desired_block,
        owner_user: user,
    })
}

/// All pairs of a problem, in the order of [`MessageSet::rate_terms`].
pub fn build_all_pairs(problem: &Problem) -> Result<Vec<QuotientPair>> {
    problem
        .messages()
        .rate_terms()
        .into_iter()
        .map(|(m, k)| build_pair(m, k, problem))
        .collect()
}

/// `f̄ᴴ A f̄ / f̄ᴴ B f̄` for a unit-norm stack.
pub fn evaluate_quotient(pair: &QuotientPair, fbar: &StackedPrecoder) -> Result<f64> {
    fbar.ensure_unit_norm()?;
    if pair.a.blocks.len() != fbar.layout().num_blocks() {
        return Err(Error::DimensionMismatch {
            expected: pair.a.blocks.len(),
            got: fbar.layout().num_blocks(),
        });
    }
    let num = pair.a.quad_form(fbar.vector());
    let den = pair.b.quad_form(fbar.vector());
    debug_assert!(num.im.abs() <= 1e-12 * num.re.abs().max(1.0));
    debug_assert!(den.im.abs() <= 1e-12 * den.re.abs().max(1.0));
    Ok(num.re / den.re)
}

/// Numerator and denominator quadratic forms of one rate term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermForms {
    pub message: MessageId,
    pub user: usize,
    pub desired_block: usize,
    /// `f̄ᴴ A f̄`.
    pub num: f64,
    /// `f̄ᴴ B f̄`.
    pub den: f64,
}

impl TermForms {
    pub fn ratio(&self) -> f64 {
        self.num / self.den
    }

    pub fn rate_bits(&self) -> f64 {
        (self.num / self.den).log2()
    }
}

/// Evaluates every rate term's quadratic forms without materializing the
/// pairs, in `O(K N² + M N²)`.
///
/// Uses `Σ_b f_bᴴ Φ_k f_b = tr(Φ_k Σ_b f_b f_bᴴ)` and subtracts the few
/// cancelled blocks per user. No unit-norm check: the noise term scales with
/// `‖f̄‖²`, so the forms are those of the pair matrices at any norm.
pub fn term_forms(problem: &Problem, fbar: &StackedPrecoder) -> Vec<TermForms> {
    let layout = fbar.layout();
    let messages = layout.messages();
    let n = layout.num_antennas();
    let num_blocks = layout.num_blocks();
    let num_users = problem.num_users();
    let x = fbar.vector();

    let mut gram = CMatrix::zeros(n, n);
    for b in 0..num_blocks {
        let fb = x.rows(b * n, n);
        gram.ger(linalg::ONE, &fb, &fb.conjugate(), linalg::ONE);
    }
    let noise = problem.snr_inv() * x.norm_squared();

    let mut gains = vec![0.0; num_users * num_blocks];
    let mut phi_total = vec![0.0; num_users];
    for k in 0..num_users {
        let h = problem.channel(k);
        for b in 0..num_blocks {
            gains[k * num_blocks + b] = h.dotc(&x.rows(b * n, n)).norm_sqr();
        }
        let phi = problem.error_cov(k);
        // tr(Φ Q) with Q Hermitian: Σ_ij Φ_ij Q_ji = Σ_ij Φ_ij conj(Q_ij)
        phi_total[k] = phi.iter().zip(gram.iter()).map(|(p, q)| (p * q.conj()).re).sum();
    }

    let block_phi = |k: usize, b: usize| -> f64 {
        let fb = x.rows(b * n, n).into_owned();
        linalg::quad_form(problem.error_cov(k), &fb)
    };

    messages
        .rate_terms()
        .into_iter()
        .map(|(message, user)| {
            let cancelled: Vec<usize> = messages
                .cancelled(message, user)
                .expect("rate_terms only yields decoders")
                .into_iter()
                .filter_map(|m| messages.block_index(m))
                .collect();
            let desired_block = messages.block_index(message).expect("message has a block");
            let row = &gains[user * num_blocks..(user + 1) * num_blocks];
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != desired_block && !cancelled.contains(b))
                .map(|(_, g)| g)
                .sum();
            let phi_sum = phi_total[user] - cancelled.iter().map(|&b| block_phi(user, b)).sum::<f64>();
            let den = interference + phi_sum + noise;
            TermForms {
                message,
                user,
                desired_block,
                num: den + row[desired_block],
                den,
            }
        })
        .collect()
}
