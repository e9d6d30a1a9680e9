mod common;

use std::collections::BTreeMap;
use std::process::Command;

use rsma_gpi::linalg::CMatrix;
use rsma_gpi::sim_harness::{self, AoaPolicy, ExperimentSpec, Method, SystemConfig, TrialRecord, CSV_HEADER};

fn small_spec(trials: usize, methods: Vec<Method>) -> ExperimentSpec {
    ExperimentSpec {
        system: SystemConfig {
            num_antennas: 4,
            num_users: 2,
            snr_db: vec![10.0, 20.0],
            ..SystemConfig::default()
        },
        methods,
        trials,
        base_seed: 17,
        ..ExperimentSpec::default()
    }
}

fn cheap_methods() -> Vec<Method> {
    vec![Method::Rzf, Method::Mrt]
}

#[test]
fn same_cell_twice_gives_the_same_record() {
    let spec = small_spec(3, Method::ALL.to_vec());
    for method in Method::ALL {
        let a = sim_harness::run_trial(&spec, 2, 1, method).unwrap();
        let b = sim_harness::run_trial(&spec, 2, 1, method).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, sim_harness::record_seed(17, 2, 1, method));
    }
}

#[test]
fn seeds_differ_across_cells() {
    let mut seen = std::collections::HashSet::new();
    for trial in 0..20 {
        for snr in 0..3 {
            for method in Method::ALL {
                assert!(seen.insert(sim_harness::record_seed(5, trial, snr, method)));
            }
        }
    }
    assert_ne!(sim_harness::channel_seed(5, 0), sim_harness::channel_seed(6, 0));
}

#[test]
fn records_sum_their_components() {
    let spec = small_spec(4, Method::ALL.to_vec());
    for r in sim_harness::run_sweep(&spec, Some(2)).unwrap() {
        let parts = r.common_rate + r.private_rates.iter().sum::<f64>() + r.partial_rates.iter().sum::<f64>();
        assert!((r.sum_se - parts).abs() <= 1e-9);
    }
}

#[test]
fn mrt_single_user_matches_closed_form() {
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.system.num_users = 1;
    spec.system.tau_p = 1e12;
    let record = sim_harness::run_trial(&spec, 0, 0, Method::Mrt).unwrap();
    let channels = sim_harness::trial_channels(&spec, 0).unwrap();
    let state = &channels.states[0];
    assert!(state.error_cov.norm() < 1e-9 * state.covariance.matrix().norm());
    let expected = (1.0f64 + state.h_hat.norm_squared() / sim_harness::snr_inv(10.0)).log2();
    assert!((record.sum_se - expected).abs() < 1e-9, "{} vs {expected}", record.sum_se);
    assert_eq!(record.common_rate, 0.0);
}

#[test]
fn methods_share_channels_within_a_trial() {
    let spec = small_spec(3, Method::ALL.to_vec());
    for trial in 0..3 {
        let digest = sim_harness::trial_channels(&spec, trial).unwrap().digest;
        // re-derived independently for every method's view of the trial
        for _ in Method::ALL {
            assert_eq!(sim_harness::trial_channels(&spec, trial).unwrap().digest, digest);
        }
    }
    let a = sim_harness::trial_channels(&spec, 0).unwrap().digest;
    let b = sim_harness::trial_channels(&spec, 1).unwrap().digest;
    assert_ne!(a, b);
    // paired records: RZF and MRT of one trial see the same estimates, so
    // with one user both reduce to the same matched filter
    let mut one = small_spec(2, cheap_methods());
    one.system.num_users = 1;
    let records = sim_harness::run_sweep(&one, None).unwrap();
    for pair in records.chunks(2) {
        assert_eq!(pair[0].trial, pair[1].trial);
        assert!((pair[0].sum_se - pair[1].sum_se).abs() < 1e-9);
    }
}

#[test]
fn single_cell_sweep() {
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.system.snr_db = vec![20.0];
    let records = sim_harness::run_sweep(&spec, Some(1)).unwrap();
    assert_eq!(records.len(), 1);
    let cells = sim_harness::aggregate(&records);
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].n, 1);
    assert_eq!(cells[0].stderr_sum_se, None);
    assert_eq!(cells[0].mean_sum_se, records[0].sum_se);
}

#[test]
fn aggregate_matches_a_scalar_pass() {
    let spec = small_spec(25, vec![Method::GpiRs, Method::Rzf, Method::Mrt]);
    let records = sim_harness::run_sweep(&spec, None).unwrap();
    let mut groups: BTreeMap<(u64, &str), Vec<f64>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.snr_db.to_bits(), r.method.name())).or_default().push(r.sum_se);
    }
    let cells = sim_harness::aggregate(&records);
    assert_eq!(cells.len(), groups.len());
    for c in &cells {
        let v = &groups[&(c.snr_db.to_bits(), c.method.name())];
        let mut total = 0.0;
        for x in v {
            total += x;
        }
        let mean = total / v.len() as f64;
        let mut ss = 0.0;
        for x in v {
            ss += (x - mean) * (x - mean);
        }
        let stderr = (ss / (v.len() - 1) as f64).sqrt() / (v.len() as f64).sqrt();
        assert!((c.mean_sum_se - mean).abs() <= 1e-12);
        assert!((c.stderr_sum_se.unwrap() - stderr).abs() <= 1e-12);
    }
}

#[test]
fn standard_error_follows_the_square_root_law() {
    // four times the trials halves the standard error
    let stderr = |trials| {
        let mut spec = small_spec(trials, vec![Method::Mrt]);
        spec.system.snr_db = vec![10.0];
        let records = sim_harness::run_sweep(&spec, None).unwrap();
        sim_harness::aggregate(&records)[0].stderr_sum_se.unwrap()
    };
    let ratio = stderr(1600) / stderr(400);
    assert!((ratio - 0.5).abs() <= 0.15, "ratio {ratio}");
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(3, Method::ALL.to_vec());
    let records = sim_harness::run_sweep(&spec, None).unwrap();
    let path = dir.path().join("records.csv");
    sim_harness::write_records_csv(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(
        CSV_HEADER,
        "trial,seed,snr_db,method,sum_se,common_rate,private_rates_json,partial_rates_json,iterations,alpha_final,converged,wall_time_ms"
    );
    assert_eq!(sim_harness::read_records_csv(&path).unwrap(), records);
}

#[test]
fn nan_records_survive_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let record = TrialRecord {
        trial: 0,
        seed: 1,
        snr_db: 5.0,
        method: Method::GpiRs,
        sum_se: f64::NAN,
        common_rate: f64::NAN,
        private_rates: vec![f64::NAN, 1.0],
        partial_rates: vec![],
        iterations: 0,
        alpha_final: None,
        converged: false,
        wall_time_ms: 0.0,
    };
    let path = dir.path().join("r.csv");
    sim_harness::write_records_csv(std::slice::from_ref(&record), &path).unwrap();
    let back = sim_harness::read_records_csv(&path).unwrap();
    assert!(back[0].sum_se.is_nan() && back[0].private_rates[0].is_nan());
    assert_eq!(back[0].private_rates[1], 1.0);
}

#[test]
fn emitted_aggregate_matches_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(6, vec![Method::GpiRs, Method::SdmaGpi, Method::Mrt]);
    let records = sim_harness::run_sweep(&spec, None).unwrap();
    sim_harness::emit_outputs(&records, &spec, dir.path()).unwrap();
    let from_csv = sim_harness::read_records_csv(&dir.path().join("records.csv")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
    let cells = doc["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 6);
    for c in cells {
        let method = c["method"].as_str().unwrap();
        let snr = c["snr_db"].as_f64().unwrap();
        let v: Vec<f64> = from_csv.iter().filter(|r| r.method.name() == method && r.snr_db == snr).map(|r| r.sum_se).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((c["mean_sum_se"].as_f64().unwrap() - mean).abs() <= 1e-12);
    }
    assert_eq!(doc["config"]["trials"], 6);
    let plot = std::fs::read_to_string(dir.path().join("sum_se_vs_snr.csv")).unwrap();
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn empty_records() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(1, vec![Method::Mrt]);
    sim_harness::emit_outputs(&[], &spec, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(text.trim_end(), CSV_HEADER);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(doc["cells"].as_array().unwrap().len(), 0);
}

#[test]
fn io_errors_name_the_path() {
    let err = sim_harness::read_records_csv(std::path::Path::new("/nonexistent/dir/records.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/records.csv"), "{err}");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(8, Method::ALL.to_vec());
    let mut texts = Vec::new();
    for threads in [1, 3, 8] {
        let path = dir.path().join(format!("r{threads}.csv"));
        sim_harness::write_records_csv(&sim_harness::run_sweep(&spec, Some(threads)).unwrap(), &path).unwrap();
        texts.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
}

#[test]
fn trace_contract() {
    let mut spec = small_spec(1, vec![Method::GpiRs]);
    spec.solver.max_iters_per_alpha = 10;
    let rows = sim_harness::run_convergence_trace(&spec, 3).unwrap();
    assert!(!rows.is_empty());
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.iteration, i + 1);
        assert!((r.objective_bits - r.lambda_log2).abs() <= 1e-9);
    }
    for w in rows.windows(2) {
        if w[0].alpha != w[1].alpha {
            assert_eq!(w[0].iteration % 10, 0);
        }
    }
    let converged = rows.len() < 10 * 20;
    if converged {
        assert!(rows.last().unwrap().residual < spec.solver.epsilon);
    }
}

#[test]
fn config_validation() {
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.trials = 0;
    assert!(spec.validate().is_err());
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.system.snr_db.clear();
    assert!(spec.validate().is_err());
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.system.groups = vec![vec![1, 5]];
    assert!(spec.validate().is_err());
    let mut spec = small_spec(1, vec![Method::Mrt]);
    spec.system.aoa = AoaPolicy::Fixed { values: vec![0.1] };
    assert!(spec.validate().is_err());
    assert_eq!(sim_harness::parse_groups("1,2;3,4").unwrap(), vec![vec![1, 2], vec![3, 4]]);
    assert!(sim_harness::parse_groups("1,x").is_err());
}

#[test]
fn spec_json_round_trip() {
    let spec = ExperimentSpec {
        system: sim_harness::clustered_system(),
        ..small_spec(2, Method::ALL.to_vec())
    };
    let text = serde_json::to_string(&spec).unwrap();
    let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    let partial: ExperimentSpec = serde_json::from_str(r#"{"trials": 7, "system": {"num_users": 3}}"#).unwrap();
    assert_eq!(partial.trials, 7);
    assert_eq!(partial.system.num_users, 3);
    assert_eq!(partial.system.num_antennas, SystemConfig::default().num_antennas);
}

#[test]
fn clustered_users_share_covariances() {
    let spec = ExperimentSpec {
        system: sim_harness::clustered_system(),
        ..small_spec(1, vec![Method::Mrt])
    };
    let states = sim_harness::trial_channels(&spec, 0).unwrap().states;
    let diff = |a: &CMatrix, b: &CMatrix| (a - b).norm();
    assert_eq!(diff(states[0].covariance.matrix(), states[1].covariance.matrix()), 0.0);
    assert!(diff(states[0].covariance.matrix(), states[2].covariance.matrix()) > 1e-3);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsma-sim"))
}

#[test]
fn cli_sweep_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = cli()
            .args(["sweep-snr", "--n", "4", "--k", "2", "--snr-db", "0,20", "--trials", "4", "--seed", "9", "--threads", threads])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 4);
}

#[test]
fn cli_solve_prints_a_report() {
    let out = cli().args(["solve", "--n", "3", "--k", "2", "--seed", "4"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gap = report["objective_bits"].as_f64().unwrap() - report["lambda_log2"].as_f64().unwrap();
    assert!(gap.abs() <= 1e-9);
}

#[test]
fn cli_other_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let ok = |cmd: &mut Command| {
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(cli().args(["covariance", "--n", "4", "--aoa", "0.5"]).arg("--out").arg(p("r.json")));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("r.json")).unwrap()).unwrap();
    assert!(r.is_object());
    ok(cli().args(["trace", "--n", "3", "--k", "2"]).arg("--out").arg(p("trace")));
    ok(cli().args(["sweep-csit", "--n", "3", "--k", "2", "--snr-db", "10", "--taup", "1,10", "--trials", "2", "--methods", "RZF,MRT"]).arg("--out").arg(p("csit")));
    assert!(p("csit").join("sum_se_vs_taup.csv").exists());
    ok(cli().args(["multilayer", "--snr-db", "20", "--trials", "2"]).arg("--out").arg(p("ml")));
    let text = std::fs::read_to_string(p("ml").join("records.csv")).unwrap();
    assert!(text.contains("GPI_RS_1L"));
    let out = ok(cli().args(["verify", "--n", "3", "--k", "2", "--snr-db", "10"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
    // a bad group spec is an error, not a panic
    let out = cli().args(["solve", "--k", "2", "--groups", "1,3"]).output().unwrap();
    assert!(!out.status.success());
}
