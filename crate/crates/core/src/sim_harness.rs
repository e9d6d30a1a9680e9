//! Seeded Monte Carlo driver: trial generation, SNR and CSIT sweeps,
//! convergence traces and the CSV/JSON artifacts.
//!
//! Every random draw is a pure function of the base seed and the indices of
//! the draw, so a sweep gives the same bytes on any number of threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineKind};
use crate::channel_model::{self, OneRingGeometry, UserChannelState};
use crate::error::{Error, Result};
use crate::gpi_solver::{self, SolverConfig};
use crate::problem::{MessageSet, Problem};
use crate::quotient_forms::StackLayout;
use crate::rate_bounds::{self, SmoothingParam};

pub const CSV_HEADER: &str =
    "trial,seed,snr_db,method,sum_se,common_rate,private_rates_json,partial_rates_json,iterations,alpha_final,converged,wall_time_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AoaPolicy {
    /// Independent `θ_k ~ U[0, 2π)` per user and trial.
    Uniform,
    /// The same angles (radians) in every trial.
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub num_users: usize,
    /// Disjoint user groups for partial common messages, users numbered from 1.
    pub groups: Vec<Vec<usize>>,
    pub angular_spread: f64,
    pub aoa: AoaPolicy,
    pub sigma2: f64,
    pub snr_db: Vec<f64>,
    /// Uplink training budget `τ_ul · p_ul`.
    pub tau_p: f64,
    pub quad_points: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_antennas: 6,
            num_users: 4,
            groups: Vec::new(),
            angular_spread: std::f64::consts::PI / 6.0,
            aoa: AoaPolicy::Uniform,
            sigma2: 1.0,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            tau_p: 4.0,
            quad_points: channel_model::DEFAULT_QUAD_POINTS,
        }
    }
}

impl SystemConfig {
    pub fn message_set(&self) -> Result<MessageSet> {
        if self.groups.is_empty() {
            return Ok(MessageSet::single_layer(self.num_users));
        }
        let mut zero_based = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut members = Vec::with_capacity(g.len());
            for &u in g {
                if u == 0 {
                    return Err(Error::invalid("group members are numbered from 1"));
                }
                members.push(u - 1);
            }
            zero_based.push(members);
        }
        MessageSet::multi_layer(self.num_users, zero_based)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_users == 0 {
            return Err(Error::invalid("N and K must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid("SNR grid is empty"));
        }
        if !(self.sigma2 > 0.0) || !(self.tau_p > 0.0) {
            return Err(Error::invalid("σ² and τp must be positive"));
        }
        if let AoaPolicy::Fixed { values } = &self.aoa {
            if values.len() != self.num_users {
                return Err(Error::DimensionMismatch {
                    expected: self.num_users,
                    got: values.len(),
                });
            }
        }
        self.message_set().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GPI_RS")]
    GpiRs,
    /// GPI-RS restricted to one common layer even when groups are configured.
    #[serde(rename = "GPI_RS_1L")]
    GpiRs1L,
    #[serde(rename = "SDMA_GPI")]
    SdmaGpi,
    #[serde(rename = "RZF")]
    Rzf,
    #[serde(rename = "MRT")]
    Mrt,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::GpiRs, Method::GpiRs1L, Method::SdmaGpi, Method::Rzf, Method::Mrt];

    pub fn id(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::GpiRs => "GPI_RS",
            Method::GpiRs1L => "GPI_RS_1L",
            Method::SdmaGpi => "SDMA_GPI",
            Method::Rzf => "RZF",
            Method::Mrt => "MRT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub base_seed: u64,
    /// Whether the SDMA baseline accounts for the CSIT error covariance.
    pub sdma_use_error_cov: bool,
    /// Measure per-record solve time; off keeps the CSV byte-reproducible.
    pub record_timing: bool,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            system: SystemConfig::default(),
            solver: SolverConfig::default(),
            methods: vec![Method::GpiRs, Method::SdmaGpi, Method::Rzf, Method::Mrt],
            trials: 100,
            base_seed: 0,
            sdma_use_error_cov: false,
            record_timing: false,
            output_path: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        self.system.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub method: Method,
    pub sum_se: f64,
    pub common_rate: f64,
    pub private_rates: Vec<f64>,
    pub partial_rates: Vec<f64>,
    pub iterations: usize,
    /// Final smoothing parameter; absent for closed-form methods.
    pub alpha_final: Option<f64>,
    pub converged: bool,
    pub wall_time_ms: f64,
}

const fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mix of a list of integers (SplitMix64 finalizer).
pub fn hash64(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9e37_79b9_7f4a_7c15, |h, &p| {
        splitmix(h.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ splitmix(p.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

/// Seed recorded for one (trial, SNR point, method) cell.
pub fn record_seed(base_seed: u64, trial: usize, snr_index: usize, method: Method) -> u64 {
    hash64(&[base_seed, trial as u64, snr_index as u64, method.id()])
}

/// Seed of the channel draw of one trial, shared by all SNR points and methods.
pub fn channel_seed(base_seed: u64, trial: usize) -> u64 {
    hash64(&[base_seed, trial as u64])
}

/// Channel states of one trial and a digest of their bits.
#[derive(Debug, Clone)]
pub struct TrialChannels {
    pub states: Vec<UserChannelState>,
    pub digest: u64,
}

pub fn channel_digest(states: &[UserChannelState]) -> u64 {
    let mut words = Vec::new();
    for s in states {
        for z in s.h.iter().chain(s.h_hat.iter()).chain(s.error_cov.iter()) {
            words.push(z.re.to_bits());
            words.push(z.im.to_bits());
        }
    }
    hash64(&words)
}

/// Draws AoAs, covariances, channels and CSIT for one trial from `seed`.
pub fn draw_channels(system: &SystemConfig, seed: u64) -> Result<TrialChannels> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(system.num_users);
    for k in 0..system.num_users {
        let aoa = match &system.aoa {
            AoaPolicy::Uniform => rng.random::<f64>() * std::f64::consts::TAU,
            AoaPolicy::Fixed { values } => values[k],
        };
        let geom = OneRingGeometry::new(system.num_antennas, aoa, system.angular_spread)?;
        let cov = channel_model::build_one_ring_covariance(&geom, system.quad_points)?;
        let kl = channel_model::kl_factorize(&cov, channel_model::DEFAULT_KL_REL_TOL)?;
        let h = channel_model::sample_channel(&kl, &mut rng);
        let phi = channel_model::lmmse_error_covariance(&cov, system.tau_p, system.sigma2)?;
        states.push(channel_model::sample_csit(&h, &phi, &cov, &mut rng)?);
    }
    let digest = channel_digest(&states);
    Ok(TrialChannels { states, digest })
}

pub fn trial_channels(spec: &ExperimentSpec, trial: usize) -> Result<TrialChannels> {
    draw_channels(&spec.system, channel_seed(spec.base_seed, trial))
}

/// `σ²/P` for a given SNR `P/σ²` in dB.
pub fn snr_inv(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn evaluate(
    spec: &ExperimentSpec,
    channels: &TrialChannels,
    trial: usize,
    snr_index: usize,
    method: Method,
) -> Result<TrialRecord> {
    let snr_db = spec.system.snr_db[snr_index];
    let messages = spec.system.message_set()?;
    let problem = Problem::from_states(&channels.states, messages, snr_inv(snr_db))?;
    let layout = StackLayout::for_problem(&problem);
    let started = Instant::now();
    let (fbar, iterations, alpha_final, converged) = match method {
        Method::GpiRs | Method::GpiRs1L => {
            let target = if method == Method::GpiRs {
                problem.clone()
            } else {
                problem.with_messages(problem.messages().without_groups())?
            };
            let report = gpi_solver::solve(&target, &spec.solver, None)?;
            (
                report.fbar_star.embed_into(&layout)?,
                report.iterations,
                Some(report.alpha_final),
                report.converged,
            )
        }
        Method::SdmaGpi => {
            let report = baselines::sdma_gpi_solve(&problem, &spec.solver, spec.sdma_use_error_cov)?;
            (
                report.fbar_star.embed_into(&layout)?,
                report.iterations,
                Some(report.alpha_final),
                report.converged,
            )
        }
        Method::Rzf => (baselines::baseline_precoders(BaselineKind::Rzf, &problem, &spec.solver)?, 0, None, true),
        Method::Mrt => (baselines::baseline_precoders(BaselineKind::Mrt, &problem, &spec.solver)?, 0, None, true),
    };
    let wall_time_ms = if spec.record_timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let rates = rate_bounds::exact_breakdown(&fbar, &problem)?;
    Ok(TrialRecord {
        trial,
        seed: record_seed(spec.base_seed, trial, snr_index, method),
        snr_db,
        method,
        sum_se: rates.sum,
        common_rate: rates.common_rate,
        private_rates: rates.private_rates,
        partial_rates: rates.partial_rates,
        iterations,
        alpha_final,
        converged,
        wall_time_ms,
    })
}

/// Runs one method on one trial at one SNR point.
pub fn run_trial(spec: &ExperimentSpec, trial: usize, snr_index: usize, method: Method) -> Result<TrialRecord> {
    spec.validate()?;
    if snr_index >= spec.system.snr_db.len() {
        return Err(Error::invalid(format!("SNR index {snr_index} out of range")));
    }
    evaluate(spec, &trial_channels(spec, trial)?, trial, snr_index, method)
}

/// A record for a cell whose evaluation failed; it never aborts the sweep.
fn failed_record(spec: &ExperimentSpec, trial: usize, snr_index: usize, method: Method) -> TrialRecord {
    let k = spec.system.num_users;
    TrialRecord {
        trial,
        seed: record_seed(spec.base_seed, trial, snr_index, method),
        snr_db: spec.system.snr_db[snr_index],
        method,
        sum_se: f64::NAN,
        common_rate: f64::NAN,
        private_rates: vec![f64::NAN; k],
        partial_rates: vec![f64::NAN; spec.system.groups.len()],
        iterations: 0,
        alpha_final: None,
        converged: false,
        wall_time_ms: 0.0,
    }
}

fn sort_key(r: &TrialRecord, spec: &ExperimentSpec) -> (usize, usize, Method) {
    let snr_index = spec.system.snr_db.iter().position(|&s| s == r.snr_db).unwrap_or(usize::MAX);
    (r.trial, snr_index, r.method)
}

/// Every trial × SNR × method cell, sorted by (trial, SNR index, method).
///
/// Trials run on a pool of `threads` workers (all cores when `None`).
pub fn run_sweep(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|trial| {
                let channels = trial_channels(spec, trial);
                let mut out = Vec::new();
                for snr_index in 0..spec.system.snr_db.len() {
                    for &method in &spec.methods {
                        let record = channels
                            .as_ref()
                            .map_err(|e| Error::invalid(e.to_string()))
                            .and_then(|c| evaluate(spec, c, trial, snr_index, method));
                        out.push(record.unwrap_or_else(|e| {
                            eprintln!("trial {trial}, {} dB, {method}: {e}", spec.system.snr_db[snr_index]);
                            failed_record(spec, trial, snr_index, method)
                        }));
                    }
                }
                out
            })
            .collect()
    });
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    records.sort_by_key(|r| sort_key(r, spec));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub snr_db: f64,
    pub method: Method,
    pub n: usize,
    pub mean_sum_se: f64,
    /// Standard error of the mean; absent with fewer than two records.
    pub stderr_sum_se: Option<f64>,
    pub mean_common_rate: f64,
    pub converged_fraction: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: ExperimentSpec,
    pub cells: Vec<CellSummary>,
}

/// Mean and standard error per (SNR, method) cell, in sorted cell order.
/// Failed records (non-finite sum) are left out.
pub fn aggregate(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(u64, Method), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        // order SNR keys numerically via their IEEE bits shifted to sort like values
        let bits = r.snr_db.to_bits();
        let key = if r.snr_db.is_sign_negative() { !bits } else { bits | (1 << 63) };
        cells.entry((key, r.method)).or_default().push(r);
    }
    cells
        .into_values()
        .map(|rows| {
            let ok: Vec<&&TrialRecord> = rows.iter().filter(|r| r.sum_se.is_finite()).collect();
            let n = ok.len();
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            let mean_sum_se = mean(&|r| r.sum_se);
            let stderr_sum_se = (n >= 2).then(|| {
                let var = ok.iter().map(|r| (r.sum_se - mean_sum_se).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            });
            CellSummary {
                snr_db: rows[0].snr_db,
                method: rows[0].method,
                n,
                mean_sum_se,
                stderr_sum_se,
                mean_common_rate: mean(&|r| r.common_rate),
                converged_fraction: rows.iter().filter(|r| r.converged).count() as f64 / rows.len() as f64,
                mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_records_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.snr_db),
            r.method.to_string(),
            fmt_f64(r.sum_se),
            fmt_f64(r.common_rate),
            json_list(&r.private_rates),
            json_list(&r.partial_rates),
            r.iterations.to_string(),
            r.alpha_final.map(fmt_f64).unwrap_or_default(),
            r.converged.to_string(),
            fmt_f64(r.wall_time_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// JSON array of floats; non-finite entries become `null`.
fn json_list(v: &[f64]) -> String {
    let values: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
    serde_json::to_string(&values).expect("float list serializes")
}

fn parse_json_list(s: &str) -> Result<Vec<f64>> {
    let values: Vec<Option<f64>> = serde_json::from_str(s)?;
    Ok(values.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::invalid(format!("{}: unexpected CSV header", path.display())));
    }
    let bad = |what: &str| Error::invalid(format!("{}: bad {what} field", path.display()));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize, what: &str| f(i).parse::<f64>().map_err(|_| bad(what));
        out.push(TrialRecord {
            trial: f(0).parse().map_err(|_| bad("trial"))?,
            seed: f(1).parse().map_err(|_| bad("seed"))?,
            snr_db: num(2, "snr_db")?,
            method: f(3).parse()?,
            sum_se: num(4, "sum_se")?,
            common_rate: num(5, "common_rate")?,
            private_rates: parse_json_list(f(6))?,
            partial_rates: parse_json_list(f(7))?,
            iterations: f(8).parse().map_err(|_| bad("iterations"))?,
            alpha_final: if f(9).is_empty() { None } else { Some(num(9, "alpha_final")?) },
            converged: f(10).parse().map_err(|_| bad("converged"))?,
            wall_time_ms: num(11, "wall_time_ms")?,
        });
    }
    Ok(out)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Mean sum SE per method against `x`, one row per x value.
pub fn write_plot_csv(x_name: &str, rows: &[(f64, Vec<CellSummary>)], methods: &[Method], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![x_name.to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for (x, cells) in rows {
        let mut line = vec![fmt_f64(*x)];
        for m in methods {
            let v = cells.iter().find(|c| c.method == *m).map(|c| fmt_f64(c.mean_sum_se));
            line.push(v.unwrap_or_default());
        }
        w.write_record(&line).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `records.csv`, `aggregate.json` and `sum_se_vs_snr.csv` into `dir`.
pub fn emit_outputs(records: &[TrialRecord], spec: &ExperimentSpec, dir: &Path) -> Result<Aggregate> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records_csv(records, &dir.join("records.csv"))?;
    let cells = aggregate(records);
    let doc = Aggregate {
        config: spec.clone(),
        cells,
    };
    write_json(&doc, &dir.join("aggregate.json"))?;
    let mut by_snr: Vec<(f64, Vec<CellSummary>)> = Vec::new();
    for c in &doc.cells {
        match by_snr.iter_mut().find(|(x, _)| *x == c.snr_db) {
            Some((_, v)) => v.push(c.clone()),
            None => by_snr.push((c.snr_db, vec![c.clone()])),
        }
    }
    write_plot_csv("snr_db", &by_snr, &spec.methods, &dir.join("sum_se_vs_snr.csv"))?;
    Ok(doc)
}

/// Sweeps the training budget `τp`, one full SNR sweep per value. Each value
/// gets its own subdirectory and `sum_se_vs_taup.csv` collects the means at
/// the first SNR point.
pub fn run_csit_sweep(spec: &ExperimentSpec, tau_values: &[f64], threads: Option<usize>, dir: &Path) -> Result<Vec<(f64, Aggregate)>> {
    if tau_values.is_empty() {
        return Err(Error::invalid("no τp values given"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for &tau in tau_values {
        let mut s = spec.clone();
        s.system.tau_p = tau;
        let records = run_sweep(&s, threads)?;
        let agg = emit_outputs(&records, &s, &dir.join(format!("taup_{tau}")))?;
        let first = s.system.snr_db[0];
        rows.push((tau, agg.cells.iter().filter(|c| c.snr_db == first).cloned().collect()));
        out.push((tau, agg));
    }
    write_plot_csv("tau_p", &rows, &spec.methods, &dir.join("sum_se_vs_taup.csv"))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    /// `J` from the SINR-form bounds.
    pub objective_bits: f64,
    /// `log₂ λ` from the quotient forms.
    pub lambda_log2: f64,
    pub alpha: f64,
}

/// GPI-RS iteration history on the channels drawn from `instance_seed`, at
/// the first SNR point of the grid.
pub fn run_convergence_trace(spec: &ExperimentSpec, instance_seed: u64) -> Result<Vec<TraceRow>> {
    spec.validate()?;
    let channels = draw_channels(&spec.system, instance_seed)?;
    let problem = Problem::from_states(&channels.states, spec.system.message_set()?, snr_inv(spec.system.snr_db[0]))?;
    let config = SolverConfig {
        record_iterates: true,
        ..spec.solver.clone()
    };
    let report = gpi_solver::solve(&problem, &config, None)?;
    report
        .iterates
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let alpha = report.alpha_history[t];
            Ok(TraceRow {
                iteration: t + 1,
                residual: report.residual_trace[t],
                objective_bits: rate_bounds::objective_j(f, &problem, SmoothingParam::new(alpha)?)?,
                lambda_log2: report.objective_trace[t],
                alpha,
            })
        })
        .collect()
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(["iteration", "residual", "objective_bits", "lambda_log2", "alpha"])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses `"1,2;3,4"` into groups of 1-based user numbers.
pub fn parse_groups(s: &str) -> Result<Vec<Vec<usize>>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|g| {
            g.split(',')
                .map(|u| u.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad user index {u:?}"))))
                .collect()
        })
        .collect()
}

/// The clustered two-group scenario: users 1–2 at `π/3`, users 3–4 at `2π/3`.
pub fn clustered_system() -> SystemConfig {
    use std::f64::consts::PI;
    SystemConfig {
        num_antennas: 6,
        num_users: 4,
        groups: vec![vec![1, 2], vec![3, 4]],
        aoa: AoaPolicy::Fixed {
            values: vec![PI / 3.0, PI / 3.0, 2.0 * PI / 3.0, 2.0 * PI / 3.0],
        },
        ..SystemConfig::default()
    }
}
