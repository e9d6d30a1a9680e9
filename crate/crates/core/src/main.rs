use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rsma_gpi::channel_model::{self, OneRingGeometry};
use rsma_gpi::gpi_solver;
use rsma_gpi::oracles::{self, FdSpec};
use rsma_gpi::quotient_forms;
use rsma_gpi::rate_bounds::{self, SmoothingParam};
use rsma_gpi::sim_harness::{self, ExperimentSpec, Method};
use rsma_gpi::{Error, MessageId, Problem, Result};

/// Precoder optimization and Monte Carlo evaluation for rate-splitting
/// multiple access under imperfect CSIT.
#[derive(Parser)]
#[command(name = "rsma-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the one-ring spatial covariance of a uniform circular array as JSON.
    Covariance {
        #[arg(long, default_value_t = 6)]
        n: usize,
        /// Angle of arrival in radians.
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
        aoa: f64,
        /// Angular spread in radians.
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6)]
        spread: f64,
        #[arg(long, default_value_t = channel_model::DEFAULT_QUAD_POINTS)]
        quad_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance with GPI-RS and print the report as JSON.
    Solve(Common),
    /// Sum SE against SNR for every selected method.
    SweepSnr(Common),
    /// Sum SE against the training budget τp (give several values to --taup).
    SweepCsit(Common),
    /// Per-iteration residual, objective and α of one GPI-RS run.
    Trace(Common),
    /// Clustered two-group scenario comparing multi-layer and one-layer RSMA.
    Multilayer(Common),
    /// Audit one converged instance against the independent oracles.
    Verify(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// User groups for partial common messages, e.g. "1,2;3,4".
    #[arg(long)]
    groups: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    taup: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha_init: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated subset of GPI_RS, GPI_RS_1L, SDMA_GPI, RZF, MRT.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record per-record wall time (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn spec(&self, base: ExperimentSpec) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                serde_json::from_str(&text)?
            }
            None => base,
        };
        let sys = &mut spec.system;
        if let Some(n) = self.n {
            sys.num_antennas = n;
        }
        if let Some(k) = self.k {
            sys.num_users = k;
        }
        if let Some(g) = &self.groups {
            sys.groups = sim_harness::parse_groups(g)?;
        }
        if let Some(s) = &self.snr_db {
            sys.snr_db = s.clone();
        }
        if let Some(t) = &self.taup {
            sys.tau_p = *t.first().ok_or_else(|| Error::InvalidArgument("--taup is empty".into()))?;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(s) = self.seed {
            spec.base_seed = s;
        }
        if let Some(a) = self.alpha_init {
            spec.solver.alpha_init = Some(a);
        }
        if let Some(e) = self.epsilon {
            spec.solver.epsilon = e;
        }
        if let Some(m) = &self.methods {
            spec.methods = m.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(o) = &self.out {
            spec.output_path = Some(o.clone());
        }
        if self.timing {
            spec.record_timing = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn output_dir(spec: &ExperimentSpec, default: &str) -> PathBuf {
    spec.output_path.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_summary(agg: &sim_harness::Aggregate) {
    println!("{:>8}  {:<10} {:>6} {:>10} {:>10} {:>6}", "snr_db", "method", "n", "mean_se", "stderr", "conv");
    for c in &agg.cells {
        let se = c.stderr_sum_se.map_or("-".to_string(), |s| format!("{s:.4}"));
        println!(
            "{:>8}  {:<10} {:>6} {:>10.4} {:>10} {:>6.2}",
            c.snr_db, c.method, c.n, c.mean_sum_se, se, c.converged_fraction
        );
    }
}

/// Problem of trial 0 at the first SNR point.
fn single_instance(spec: &ExperimentSpec) -> Result<Problem> {
    let channels = sim_harness::trial_channels(spec, 0)?;
    Problem::from_states(
        &channels.states,
        spec.system.message_set()?,
        sim_harness::snr_inv(spec.system.snr_db[0]),
    )
}

fn single_defaults() -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.system.snr_db = vec![20.0];
    spec
}

#[derive(Serialize)]
struct CovarianceDump {
    num_antennas: usize,
    aoa: f64,
    angular_spread: f64,
    real: Vec<Vec<f64>>,
    imag: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct VerifyReport {
    converged: bool,
    iterations: usize,
    alpha_final: f64,
    objective_bits: f64,
    lambda_log2: f64,
    lambda_objective_gap: f64,
    exact_sum_se: f64,
    dense_fixed_point_residual: f64,
    block_vs_dense_step_gap: f64,
    projected_gradient_norm_init: f64,
    projected_gradient_norm_final: f64,
    max_cross_formulation_gap: f64,
}

fn verify(spec: &ExperimentSpec) -> Result<VerifyReport> {
    let problem = single_instance(spec)?;
    let report = gpi_solver::solve(&problem, &spec.solver, None)?;
    let alpha = SmoothingParam::new(report.alpha_final)?;
    let f = &report.fbar_star;
    let init = gpi_solver::mrt_init(&problem);
    let block_step = gpi_solver::gpi_step(f, &problem, alpha)?;
    let mut dense = quotient_forms::StackedPrecoder::new(oracles::dense_step(f, &problem, alpha)?, f.layout().clone())?;
    dense.canonicalize_phase();

    let blocks = f.blocks();
    let mut cross = 0.0f64;
    for pair in quotient_forms::build_all_pairs(&problem)? {
        let quotient = quotient_forms::evaluate_quotient(&pair, f)?.log2();
        let sinr = match pair.message {
            MessageId::Common => rate_bounds::common_rate_bound(pair.owner_user, &blocks, &problem)?,
            MessageId::Partial(g) => rate_bounds::partial_common_rate_bound(g, pair.owner_user, &blocks, &problem)?,
            MessageId::Private(k) => rate_bounds::private_rate_bound(k, &blocks, &problem)?,
        };
        cross = cross.max((quotient - sinr).abs());
    }
    Ok(VerifyReport {
        converged: report.converged,
        iterations: report.iterations,
        alpha_final: report.alpha_final,
        objective_bits: report.objective_bits,
        lambda_log2: report.lambda_log2,
        lambda_objective_gap: (report.objective_bits - report.lambda_log2).abs(),
        exact_sum_se: report.rate_breakdown.sum,
        dense_fixed_point_residual: oracles::dense_fixed_point_check(f, &problem, alpha)?,
        block_vs_dense_step_gap: (block_step.vector() - dense.vector()).norm(),
        projected_gradient_norm_init: oracles::projected_gradient_norm(&init, &problem, alpha, FdSpec::default())?,
        projected_gradient_norm_final: oracles::projected_gradient_norm(f, &problem, alpha, FdSpec::default())?,
        max_cross_formulation_gap: cross,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Covariance {
            n,
            aoa,
            spread,
            quad_points,
            out,
        } => {
            let geom = OneRingGeometry::new(n, aoa, spread)?;
            let r = channel_model::build_one_ring_covariance(&geom, quad_points)?;
            let m = r.matrix();
            let rows = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
                (0..n).map(|i| (0..n).map(|j| f(&m[(i, j)])).collect()).collect()
            };
            let dump = CovarianceDump {
                num_antennas: n,
                aoa,
                angular_spread: spread,
                real: rows(|z| z.re),
                imag: rows(|z| z.im),
            };
            emit_json(&dump, out.as_deref())
        }
        Command::Solve(c) => {
            let spec = c.spec(single_defaults())?;
            let report = gpi_solver::solve(&single_instance(&spec)?, &spec.solver, None)?;
            emit_json(&report, spec.output_path.as_deref())
        }
        Command::SweepSnr(c) => {
            let spec = c.spec(ExperimentSpec::default())?;
            let records = sim_harness::run_sweep(&spec, c.threads)?;
            let agg = sim_harness::emit_outputs(&records, &spec, &output_dir(&spec, "out/sweep-snr"))?;
            print_summary(&agg);
            Ok(())
        }
        Command::SweepCsit(c) => {
            let mut base = ExperimentSpec::default();
            base.system.snr_db = vec![20.0];
            let spec = c.spec(base)?;
            let taus = c.taup.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
            let dir = output_dir(&spec, "out/sweep-csit");
            for (tau, agg) in sim_harness::run_csit_sweep(&spec, &taus, c.threads, &dir)? {
                println!("tau_p = {tau}");
                print_summary(&agg);
            }
            Ok(())
        }
        Command::Trace(c) => {
            let spec = c.spec(single_defaults())?;
            let rows = sim_harness::run_convergence_trace(&spec, spec.base_seed)?;
            match &spec.output_path {
                Some(path) => sim_harness::write_trace_csv(&rows, path),
                None => {
                    println!("iteration,residual,objective_bits,lambda_log2,alpha");
                    for r in rows {
                        println!("{},{},{},{},{}", r.iteration, r.residual, r.objective_bits, r.lambda_log2, r.alpha);
                    }
                    Ok(())
                }
            }
        }
        Command::Multilayer(c) => {
            let base = ExperimentSpec {
                system: sim_harness::clustered_system(),
                methods: vec![Method::GpiRs, Method::GpiRs1L, Method::SdmaGpi, Method::Rzf, Method::Mrt],
                ..ExperimentSpec::default()
            };
            let spec = c.spec(base)?;
            let records = sim_harness::run_sweep(&spec, c.threads)?;
            let agg = sim_harness::emit_outputs(&records, &spec, &output_dir(&spec, "out/multilayer"))?;
            print_summary(&agg);
            Ok(())
        }
        Command::Verify(c) => {
            let spec = c.spec(single_defaults())?;
            emit_json(&verify(&spec)?, spec.output_path.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
