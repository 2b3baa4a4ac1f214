//! Command-line front end: load a scenario config, run syntheses, solves
//! and certification checks, and emit CSV/JSON artifacts.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use mildsim_core::certify::{fit_coefficient_constants, lemma23_certificate, MqForm};
use mildsim_core::clarke::growth_check;
use mildsim_core::evolution::{estimate_m, lower_triangular_sample, verify_kozak_axioms};
use mildsim_core::phase::{fit_phase_constants, lemma21_check, standard_trial_paths};
use mildsim_core::problem::{ProblemConfig, ProblemSpec, TimeCoefficient};
use mildsim_core::rosenblatt::{simulate_q_rosenblatt, simulate_rosenblatt, BrownianGrid, HurstParameter};
use mildsim_core::solver::picard_solve;
use mildsim_core::{build_hypothesis_report, PropagatorPair, Verdict};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const REPORT_DIR_ENV: &str = "MILDSIM_REPORT_DIR";

#[derive(Parser)]
#[command(name = "mildsim", version, about = "Impulsive stochastic evolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the instance described by a JSON config and run its checks
    Solve { config: PathBuf },
    /// Run the bundled reference scenario, with optional overrides
    Example4 {
        /// dotted-path override, e.g. --set hurst=0.6 or --set impulses=[]
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Synthesize a scalar noise path to CSV
    Noise {
        #[arg(long)]
        hurst: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run only the named certification checks against a config
    Certify {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
    },
}

/// Problem fields plus run controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioConfig {
    #[serde(flatten)]
    problem: ProblemConfig,
    #[serde(default = "default_n_paths")]
    n_paths: usize,
    #[serde(default)]
    report_dir: Option<PathBuf>,
    #[serde(default)]
    checks: Vec<String>,
}

fn default_n_paths() -> usize {
    500
}

const KNOWN_CHECKS: [&str; 6] = ["kozak", "lemma21", "lemma23", "m0", "bihari", "growth"];

#[derive(Debug, Serialize)]
struct CheckResult {
    name: String,
    pass: bool,
    margin: f64,
    detail: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct SolverSummary {
    verdict: Verdict,
    iterations: usize,
    final_distance: f64,
    branch_kinds: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RunReport {
    tool_version: String,
    seed: u64,
    /// the only field that varies between identical runs
    timestamp_unix: u64,
    wall_clock_ms: u128,
    checks: Vec<CheckResult>,
    solver: Option<SolverSummary>,
}

/// Exit status as a pure function of report content.
fn report_exit(report: &RunReport) -> ExitCode {
    let checks_ok = report.checks.iter().all(|c| c.pass);
    let solver_ok = report
        .solver
        .as_ref()
        .map_or(true, |s| s.verdict == Verdict::Converged);
    if checks_ok && solver_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Solve { config } => {
            let text = std::fs::read_to_string(&config)?;
            let scenario: ScenarioConfig = serde_json::from_str(&text)?;
            validate_checks(&scenario.checks)?;
            let report = run_scenario(&scenario, &scenario.checks, true)?;
            Ok(report_exit(&report))
        }
        Command::Example4 { set } => {
            let mut tree: serde_json::Value = serde_json::from_str(DEFAULT_SCENARIO)?;
            for kv in &set {
                apply_override(&mut tree, kv)?;
            }
            let scenario: ScenarioConfig = serde_json::from_value(tree)?;
            validate_checks(&scenario.checks)?;
            let report = run_scenario(&scenario, &scenario.checks, true)?;
            Ok(report_exit(&report))
        }
        Command::Noise { hurst, n, seed, out } => {
            let h = HurstParameter::new(hurst)?;
            let grid = BrownianGrid::sample(seed, n, 1, 1.0);
            let path = simulate_rosenblatt(h, &grid, 0)?;
            std::fs::write(&out, path.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { config, checks } => {
            let text = std::fs::read_to_string(&config)?;
            let scenario: ScenarioConfig = serde_json::from_str(&text)?;
            validate_checks(&checks)?;
            let report = run_scenario(&scenario, &checks, false)?;
            Ok(report_exit(&report))
        }
    }
}

fn validate_checks(checks: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    for c in checks {
        if !KNOWN_CHECKS.contains(&c.as_str()) {
            return Err(format!("unknown check '{c}'; known: {}", KNOWN_CHECKS.join(", ")).into());
        }
    }
    Ok(())
}

/// Sets a dotted-path key in a JSON tree; the value is parsed as JSON
/// when possible, else taken as a string.
fn apply_override(tree: &mut serde_json::Value, kv: &str) -> Result<(), Box<dyn std::error::Error>> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| format!("override '{kv}' is not KEY=VALUE"))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            node[part] = value;
            return Ok(());
        }
        node = node
            .get_mut(part)
            .ok_or_else(|| format!("override path '{key}' missing at '{part}'"))?;
    }
    unreachable!()
}

fn report_dir(scenario: &ScenarioConfig) -> PathBuf {
    if let Ok(dir) = std::env::var(REPORT_DIR_ENV) {
        return PathBuf::from(dir);
    }
    scenario
        .report_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("reports"))
}

fn run_scenario(
    scenario: &ScenarioConfig,
    checks: &[String],
    solve: bool,
) -> Result<RunReport, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let dir = report_dir(scenario);
    std::fs::create_dir_all(&dir)?;
    let spec = scenario.problem.build()?;
    let n_steps = spec.n_steps();
    let pair = PropagatorPair::compute(&spec.generator, spec.beta, n_steps, spec.delta);
    let grid = BrownianGrid::sample(spec.seed, n_steps, spec.covariance.n_modes(), spec.beta);
    let noise = simulate_q_rosenblatt(spec.hurst, &spec.covariance, &grid)?;

    let mut solver_summary = None;
    if solve {
        let (path, trace) = picard_solve(&spec, &pair, &noise)?;
        std::fs::write(dir.join("path.csv"), path.to_csv())?;
        std::fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
        let mut branch_kinds: Vec<String> = path
            .provenance
            .iter()
            .map(|k| format!("{k:?}"))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        branch_kinds.sort();
        solver_summary = Some(SolverSummary {
            verdict: trace.verdict,
            iterations: trace.iterations,
            final_distance: *trace.distances.last().unwrap_or(&0.0),
            branch_kinds,
        });
    }

    let mut results = Vec::new();
    for name in checks {
        results.push(run_check(name, &spec, &pair, &noise.times, scenario.n_paths)?);
    }
    let report = RunReport {
        tool_version: TOOL_VERSION.to_string(),
        seed: spec.seed,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)?
            .as_secs(),
        wall_clock_ms: start.elapsed().as_millis(),
        checks: results,
        solver: solver_summary,
    };
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn run_check(
    name: &str,
    spec: &ProblemSpec,
    pair: &PropagatorPair,
    noise_times: &[f64],
    n_paths: usize,
) -> Result<CheckResult, Box<dyn std::error::Error>> {
    let _ = noise_times;
    let dim = spec.n_dim();
    let beta = spec.beta;
    let result = match name {
        "kozak" => {
            let rep = verify_kozak_axioms(&spec.generator, beta, spec.delta, 5e-3);
            CheckResult {
                name: name.into(),
                pass: rep.pass,
                margin: 5e-3
                    - [rep.b1_ii_tau, rep.b1_ii_s, rep.b2_i, rep.b2_ii, rep.b2_iii]
                        .into_iter()
                        .fold(0.0, f64::max),
                detail: serde_json::to_value(&rep)?,
            }
        }
        "lemma21" => {
            let trials = standard_trial_paths(beta, dim, 110, spec.seed);
            let constants = fit_phase_constants(&spec.weight, beta, &trials)?;
            let mut worst = f64::NEG_INFINITY;
            for hist in &trials {
                let m = lemma21_check(hist, &constants, &spec.weight, 16)?;
                worst = worst.max(m.worst_margin);
            }
            CheckResult {
                name: name.into(),
                pass: worst <= 1e-9,
                margin: -worst,
                detail: serde_json::to_value(&constants)?,
            }
        }
        "lemma23" => {
            let m = operator_bound(pair)?;
            let q_sup = spec.q_map.coeff.sup_on(beta)
                * spec.q_map.kernel.weighted_l2(&spec.weight, "L_u")?;
            let phi = vec![DVector::from_element(dim, q_sup.max(0.1)); pair.grid().len()];
            let rep = lemma23_certificate(
                pair,
                &phi,
                spec.hurst,
                &spec.covariance,
                pair.n_steps(),
                beta,
                m,
                n_paths.max(500),
                spec.seed,
            )?;
            CheckResult {
                name: name.into(),
                pass: rep.pass,
                margin: rep.bound - rep.ucl99,
                detail: serde_json::to_value(&rep)?,
            }
        }
        "m0" => {
            let report = hypothesis_report(spec, pair)?;
            CheckResult {
                name: name.into(),
                pass: report.m0.max() < 1.0,
                margin: 1.0 - report.m0.max(),
                detail: serde_json::to_value(&report)?,
            }
        }
        "bihari" => {
            let report = hypothesis_report(spec, pair)?;
            let (pass, margin) = report
                .bihari
                .as_ref()
                .map(|b| (b.pass, if b.margin.is_infinite() { f64::MAX } else { b.margin }))
                .unwrap_or((false, f64::MIN));
            CheckResult {
                name: name.into(),
                pass,
                margin,
                detail: serde_json::to_value(&report)?,
            }
        }
        "growth" => {
            let Some(sigma) = &spec.sigma else {
                return Ok(CheckResult {
                    name: name.into(),
                    pass: true,
                    margin: 0.0,
                    detail: serde_json::json!({"note": "no perturbation term"}),
                });
            };
            // envelope from the quadratic coefficients themselves
            let (b1, b2) = sigma_bounds(sigma);
            let rep = growth_check(sigma, |_| b1, b2, beta, 5.0, 100)?;
            CheckResult {
                name: name.into(),
                pass: rep.pass,
                margin: rep.worst_margin,
                detail: serde_json::to_value(&rep)?,
            }
        }
        other => return Err(format!("unknown check '{other}'").into()),
    };
    Ok(result)
}

/// Growth envelope of the quadratic branches:
/// (2ax + b)^2 <= 8a^2 x^2 + 2b^2.
fn sigma_bounds(sigma: &mildsim_core::LocallyLipschitzFn) -> (f64, f64) {
    match sigma {
        mildsim_core::LocallyLipschitzFn::MinQuadratics { q1, q2 } => {
            let b1 = (2.0 * q1.b * q1.b).max(2.0 * q2.b * q2.b);
            let b2 = (8.0 * q1.a * q1.a).max(8.0 * q2.a * q2.a);
            (b1, b2)
        }
        _ => (8.0, 8.0),
    }
}

fn operator_bound(pair: &PropagatorPair) -> Result<f64, Box<dyn std::error::Error>> {
    let sample = lower_triangular_sample(pair, (pair.n_steps() / 16).max(1));
    Ok(estimate_m(pair, &sample)?)
}

fn hypothesis_report(
    spec: &ProblemSpec,
    pair: &PropagatorPair,
) -> Result<mildsim_core::HypothesisReport, Box<dyn std::error::Error>> {
    let m = operator_bound(pair)?;
    let trials = standard_trial_paths(spec.beta, spec.n_dim(), 110, spec.seed);
    let phase = fit_phase_constants(&spec.weight, spec.beta, &trials)?;
    let constants = fit_coefficient_constants(spec, 40, spec.seed)?;
    let (b1, b2) = match &spec.sigma {
        None => (0.0, 0.0),
        Some(s) => sigma_bounds(s),
    };
    Ok(build_hypothesis_report(
        spec,
        m,
        &phase,
        constants,
        TimeCoefficient::Constant { value: 1.0 },
        MqForm::Affine { intercept: 1.0, slope: 1.0 },
        b1 * spec.beta,
        b2,
    )?)
}

/// The bundled reference scenario: Dirichlet Laplacian with a
/// Holder-1/2 drift weight, exponential delay kernels, a min-of-two-
/// quadratics perturbation and one non-instantaneous impulse window.
const DEFAULT_SCENARIO: &str = r#"{
    "hurst": 0.75,
    "q_modes": [0.5, 0.25],
    "galerkin_dim": 2,
    "beta": 1.0,
    "delta": 0.01,
    "impulses": [{"r": 0.3, "t": 0.5}],
    "weight": {"kind": "exponential", "rate": 2.0},
    "v": {"kind": "sqrt_scaled", "value": 0.1},
    "kernels": {
        "u": {"kind": "exponential", "scale": 1.0, "rate": 2.0},
        "b_tilde": {"kind": "constant", "value": 0.1},
        "mu": [{"kind": "exponential", "scale": 0.1, "rate": 2.0}],
        "mu_tilde": [{"kind": "exponential", "scale": 0.1, "rate": 2.0}]
    },
    "sigma": {"q1": [1.0, 0.0, 0.0], "q2": [1.0, -2.0, 1.0]},
    "eta": {"kind": "constant", "value": [0.5, 0.0]},
    "xi": [0.0, 0.0],
    "seed": 424242,
    "max_iter": 40,
    "abs_tol": 1e-9,
    "n_paths": 500,
    "checks": ["m0", "bihari", "growth"]
}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_parses() {
        let s: ScenarioConfig = serde_json::from_str(DEFAULT_SCENARIO).unwrap();
        assert_eq!(s.problem.seed, 424242);
        assert_eq!(s.checks, vec!["m0", "bihari", "growth"]);
        s.problem.build().unwrap();
    }

    #[test]
    fn overrides_apply_by_dotted_path() {
        let mut tree: serde_json::Value = serde_json::from_str(DEFAULT_SCENARIO).unwrap();
        apply_override(&mut tree, "hurst=0.6").unwrap();
        apply_override(&mut tree, "kernels.b_tilde.value=0.2").unwrap();
        apply_override(&mut tree, "impulses=[]").unwrap();
        let s: ScenarioConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(s.problem.hurst, 0.6);
        assert!(s.problem.impulses.is_empty());
    }

    #[test]
    fn unknown_check_rejected() {
        assert!(validate_checks(&["m0".into(), "frobnicate".into()]).is_err());
    }

    #[test]
    fn exit_code_is_pure_in_report() {
        let mut report = RunReport {
            tool_version: "x".into(),
            seed: 0,
            timestamp_unix: 0,
            wall_clock_ms: 0,
            checks: vec![],
            solver: None,
        };
        assert_eq!(report_exit(&report), ExitCode::SUCCESS);
        report.checks.push(CheckResult {
            name: "m0".into(),
            pass: false,
            margin: -0.1,
            detail: serde_json::Value::Null,
        });
        assert_eq!(report_exit(&report), ExitCode::FAILURE);
    }
}
