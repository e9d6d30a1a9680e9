#![allow(dead_code)]

use rand::Rng;
use rsma_gpi::linalg::{self, CMatrix, CVector};
use rsma_gpi::quotient_forms::{StackLayout, StackedPrecoder};
use rsma_gpi::sim_harness::{self, SystemConfig};
use rsma_gpi::{MessageSet, Problem};

/// Groups of consecutive users: `g` groups of two starting at user 0.
pub fn pair_groups(g: usize) -> Vec<Vec<usize>> {
    (0..g).map(|i| vec![2 * i, 2 * i + 1]).collect()
}

pub fn message_set(k: usize, g: usize) -> MessageSet {
    if g == 0 {
        MessageSet::single_layer(k)
    } else {
        MessageSet::multi_layer(k, pair_groups(g)).unwrap()
    }
}

pub fn random_psd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| linalg::complex_gaussian(rng, 1)[0]);
    (&g * g.adjoint()).scale(scale / n as f64)
}

/// Gaussian channel estimates and random error covariances.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, messages: MessageSet, snr_inv: f64, phi_scale: f64) -> Problem {
    let k = messages.num_users();
    let channels = (0..k).map(|_| linalg::complex_gaussian(rng, n)).collect();
    let covs = (0..k).map(|_| random_psd(rng, n, phi_scale)).collect();
    Problem::new(channels, covs, messages, snr_inv).unwrap()
}

pub fn random_unit<R: Rng>(rng: &mut R, layout: &StackLayout) -> StackedPrecoder {
    StackedPrecoder::new(linalg::complex_gaussian(rng, layout.dim()), layout.clone())
        .unwrap()
        .normalized()
}

/// One-ring instance with uniform AoAs, drawn from `seed`.
pub fn one_ring_problem(seed: u64, n: usize, k: usize, snr_db: f64, tau_p: f64) -> Problem {
    let system = SystemConfig {
        num_antennas: n,
        num_users: k,
        tau_p,
        snr_db: vec![snr_db],
        ..SystemConfig::default()
    };
    let channels = sim_harness::draw_channels(&system, seed).unwrap();
    Problem::from_states(&channels.states, MessageSet::single_layer(k), sim_harness::snr_inv(snr_db)).unwrap()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn cv(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&x| num_complex::Complex64::new(x, 0.0)))
}
