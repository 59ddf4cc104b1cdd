//! Subcommand execution: instance construction, solving, grid search,
//! scenario generation, and the verification suites.

use std::path::PathBuf;
use std::time::Instant;

use improx::dc::{abs_quadratic_instance, check_b_stationarity, DcBuilder, DcProblem};
use improx::models::{LinearizationBuilder, ModelBuilder};
use improx::problems::beam::{build_cantilever_from_scenarios, build_cantilever_instance, BeamSpec};
use improx::problems::gas::{build_gas_from_scenarios, build_gas_instance, GasTree};
use improx::problems::grid::{grid_search, GridOutcome};
use improx::problems::scenario::{
    load_scenarios, sample_scenarios, save_scenarios, ColumnSpec, DistributionSpec, ScenarioSet,
    Storage,
};
use improx::prox::{solve, SolveReport, SolveStatus, TraceEntry};
use improx::{CompositeProblem, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::config::{InstanceKind, PartialConfig, RunConfig, Subcommand};

/// Process exit status per the report contract: 0 when the solve reached
/// criticality within tol (or the subcommand succeeded), 2 on iteration cap.
/// Errors surface as `Err` and exit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    IterationCap,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::IterationCap => 2,
        }
    }
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    config: PartialConfig,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct GridArtifact {
    config: PartialConfig,
    outcome: GridOutcome,
    /// Wall-clock seconds; the only nondeterministic field.
    timing: f64,
}

#[derive(Serialize)]
struct VerifyArtifact {
    config: PartialConfig,
    checks: Vec<Check>,
    /// Wall-clock seconds; the only nondeterministic field.
    timing: f64,
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

/// Runs the resolved configuration; returns the exit status.
pub fn run(config: &RunConfig) -> Result<ExitStatus> {
    if let Some(n) = config.threads {
        // ignore the error if a global pool already exists (e.g. in-process
        // callers); subprocess invocations set it exactly once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&config.out_dir)?;
    match config.subcommand {
        Subcommand::Solve => run_solve(config),
        Subcommand::Gridsearch => run_gridsearch(config),
        Subcommand::GenScenarios => run_gen_scenarios(config),
        Subcommand::Verify => run_verify(config),
    }
}

/// Instance family after resolving `--instance file` to its file kind.
fn family(config: &RunConfig) -> InstanceKind {
    match (config.instance, config.file_kind) {
        (InstanceKind::File, Some(k)) => k,
        _ => config.instance,
    }
}

fn beam_spec(config: &RunConfig) -> BeamSpec {
    BeamSpec::standard(config.alpha, config.n)
}

fn loaded_scenarios(config: &RunConfig) -> Result<ScenarioSet> {
    let path = config
        .scenario_file
        .as_ref()
        .ok_or_else(|| Error::Config("scenario file not set".into()))?;
    load_scenarios(path)
}

/// Builds the problem, a start point, and the model builder for the solve
/// and verify subcommands. The builder borrows the returned problem.
enum Built {
    Composite(Box<CompositeProblem>, Vec<f64>),
    Dc(Box<DcProblem>, Vec<f64>),
}

fn build(config: &RunConfig) -> Result<Built> {
    match config.instance {
        InstanceKind::Beam => {
            let inst = build_cantilever_instance(&beam_spec(config), config.seed)?;
            Ok(Built::Composite(Box::new(inst.problem), inst.start))
        }
        InstanceKind::Gas => {
            let inst = build_gas_instance(
                &GasTree::chain_with_branch_n4(),
                config.n,
                config.theta,
                config.alpha,
                config.seed,
            )?;
            Ok(Built::Composite(Box::new(inst.problem), inst.start))
        }
        InstanceKind::DcToy => {
            let p = abs_quadratic_instance();
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            let x0 = rng.random_range(-1.0..1.0);
            Ok(Built::Dc(Box::new(p), vec![x0]))
        }
        InstanceKind::File => {
            let scenarios = loaded_scenarios(config)?;
            match family(config) {
                InstanceKind::Beam => {
                    let spec = BeamSpec::standard(config.alpha, scenarios.n);
                    let inst = build_cantilever_from_scenarios(&spec, scenarios)?;
                    Ok(Built::Composite(Box::new(inst.problem), inst.start))
                }
                InstanceKind::Gas => {
                    let inst = build_gas_from_scenarios(
                        &GasTree::chain_with_branch_n4(),
                        scenarios,
                        config.theta,
                        config.alpha,
                    )?;
                    Ok(Built::Composite(Box::new(inst.problem), inst.start))
                }
                other => Err(Error::Config(format!("file instance cannot be {other}"))),
            }
        }
    }
}

fn solve_built(config: &RunConfig, built: &Built) -> Result<SolveReport> {
    match built {
        Built::Composite(problem, start) => {
            let builder = LinearizationBuilder { problem, tuple_cap: config.tuples };
            solve(problem, &builder, start, &config.params)
        }
        Built::Dc(problem, start) => {
            let comp = problem.to_composite();
            let builder = DcBuilder {
                problem,
                eps: config.eps_dc,
                cap: improx::dc::DEFAULT_DC_MODEL_CAP,
            };
            solve(&comp, &builder as &dyn ModelBuilder, start, &config.params)
        }
    }
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("serialize report: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Summary table mirroring the columns Iter / SS / CPU / c(x) / f(x).
fn print_summary(report: &SolveReport) {
    println!("{:<8}{:<8}{:<10}{:<16}{:<16}", "Iter", "SS", "CPU", "c(xbar)", "f(xbar)");
    println!(
        "{:<8}{:<8}{:<10.2}{:<16.6e}{:<16.6}",
        report.iterations, report.serious_steps, report.timing, report.c, report.f
    );
}

fn run_solve(config: &RunConfig) -> Result<ExitStatus> {
    let built = build(config)?;
    let report = solve_built(config, &built)?;
    let path = config
        .out_dir
        .join(format!("solve-{}-seed{}.json", config.instance, config.seed));
    write_json(&path, &SolveArtifact { config: config.echo(), report: &report })?;
    print_summary(&report);
    println!("report: {}", path.display());
    Ok(match report.status {
        SolveStatus::Converged => ExitStatus::Success,
        SolveStatus::MaxIter => ExitStatus::IterationCap,
    })
}

fn run_gridsearch(config: &RunConfig) -> Result<ExitStatus> {
    if family(config) != InstanceKind::Beam {
        return Err(Error::Config("gridsearch supports the beam instance only".into()));
    }
    let spec;
    let table;
    if config.instance == InstanceKind::File {
        let scenarios = loaded_scenarios(config)?;
        spec = BeamSpec::standard(config.alpha, scenarios.n);
        table = improx::problems::beam::LimitStateTable::from_scenarios(&scenarios);
    } else {
        spec = beam_spec(config);
        let inst = build_cantilever_instance(&spec, config.seed)?;
        table = inst.table;
    }
    let (rows, cols) = config.grid;
    let t = Instant::now();
    let outcome = grid_search(&table, spec.y_m_bounds, spec.y_t_bounds, rows, cols, spec.alpha)?;
    let timing = t.elapsed().as_secs_f64();

    match &outcome {
        GridOutcome::Feasible { y_m, y_t, cost, avar, .. } => {
            println!(
                "grid {}x{}: best feasible cost {:.6} at (y_M, y_T) = ({:.6}, {:.6}), avar {:.3e}",
                rows, cols, cost, y_m, y_t, avar
            );
        }
        GridOutcome::Infeasible => println!("grid {rows}x{cols}: no feasible point"),
    }
    let path = config.out_dir.join(format!(
        "gridsearch-{}-{}x{}-seed{}.json",
        config.instance, rows, cols, config.seed
    ));
    write_json(&path, &GridArtifact { config: config.echo(), outcome, timing })?;
    println!("report: {}", path.display());
    Ok(ExitStatus::Success)
}

fn run_gen_scenarios(config: &RunConfig) -> Result<ExitStatus> {
    let fam = family(config);
    let spec = match fam {
        InstanceKind::Beam => beam_spec(config).distribution(),
        InstanceKind::Gas => DistributionSpec::normal_columns(vec![
            ColumnSpec {
                mean: 1.0,
                scale: 0.3,
                abs: true
            };
            GasTree::chain_with_branch_n4().n_nodes() - 1
        ]),
        other => {
            return Err(Error::Config(format!("gen-scenarios cannot sample for {other}")))
        }
    };
    let set = sample_scenarios(&spec, config.n, config.seed)?;
    let name = format!("scenarios-{}-N{}-seed{}.json", fam, config.n, config.seed);
    let path = config.out_dir.join(&name);
    let storage = if config.n * set.n_vars > 50_000 {
        Storage::Binary { file: format!("{name}.bin") }
    } else {
        Storage::Inline
    };
    save_scenarios(&set, &path, storage)?;
    println!("scenarios: {}", path.display());
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn run_verify(config: &RunConfig) -> Result<ExitStatus> {
    let t = Instant::now();
    let checks = match config.instance {
        InstanceKind::DcToy => verify_dc_toy(config)?,
        _ => verify_solve_invariants(config)?,
    };
    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let path = config.out_dir.join(format!("verify-{}.json", config.instance));
    write_json(
        &path,
        &VerifyArtifact { config: config.echo(), checks, timing: t.elapsed().as_secs_f64() },
    )?;
    println!("report: {}", path.display());
    if all_pass {
        Ok(ExitStatus::Success)
    } else {
        Err(Error::Internal("verification suite failed".into()))
    }
}

/// Analytic suite on `min x^2 - |x|` over `[-1, 1]`: from random starts the
/// solver must reach one of the two B-stationary points +-0.5 (certified),
/// and the non-stationary kink x = 0 must be rejected.
fn verify_dc_toy(config: &RunConfig) -> Result<Vec<Check>> {
    let p = abs_quadratic_instance();
    let comp = p.to_composite();
    let builder = DcBuilder { problem: &p, eps: config.eps_dc, cap: improx::dc::DEFAULT_DC_MODEL_CAP };
    // the step-norm stop test bounds the model gap, so the distance error
    // scales like sqrt(tol); 1e-11 keeps it near 3e-6
    let params = improx::OuterParams::new(
        config.params.kappa,
        config.params.lambda,
        config.params.mu0,
        1e-11,
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();

    let mut worst_dev = 0.0f64;
    let mut all_stationary = true;
    for _ in 0..20 {
        let x0 = rng.random_range(-1.0..1.0);
        let r = solve(&comp, &builder as &dyn ModelBuilder, &[x0], &params)?;
        worst_dev = worst_dev.max((r.x[0].abs() - 0.5).abs());
        let b = check_b_stationarity(&p, &r.x, 1e-5)?;
        all_stationary &= b.stationary;
    }
    checks.push(Check {
        name: "dc-toy convergence to +-0.5".into(),
        pass: worst_dev <= 1e-5,
        detail: format!("worst |x - (+-0.5)| = {worst_dev:.3e} over 20 starts (tol 1e-5)"),
    });
    checks.push(Check {
        name: "B-stationarity certified at solutions".into(),
        pass: all_stationary,
        detail: "check_b_stationarity at every returned point".into(),
    });
    let at_kink = check_b_stationarity(&p, &[0.0], 1e-5)?;
    checks.push(Check {
        name: "B-stationarity rejected at x = 0".into(),
        pass: !at_kink.stationary,
        detail: format!(
            "largest subproblem gap {:.3e}",
            at_kink.residuals.iter().map(|r| r.2).fold(0.0, f64::max)
        ),
    });
    Ok(checks)
}

/// Solve-based invariants for the stochastic instances: convergence,
/// feasibility, the criticality residual, and the descent/monotonicity
/// invariants along the trace.
fn verify_solve_invariants(config: &RunConfig) -> Result<Vec<Check>> {
    let built = build(config)?;
    let report = solve_built(config, &built)?;
    print_summary(&report);
    let mut checks = Vec::new();
    checks.push(Check {
        name: "converged".into(),
        pass: report.status == SolveStatus::Converged,
        detail: format!("status {:?} after {} iterations", report.status, report.iterations),
    });
    checks.push(Check {
        name: "final point feasible".into(),
        pass: report.c <= 0.0,
        detail: format!("c(xbar) = {:.6e}", report.c),
    });
    checks.push(Check {
        name: "criticality residual".into(),
        pass: report.criticality_residual <= 1e-5,
        detail: format!("residual = {:.6e} (tol 1e-5)", report.criticality_residual),
    });
    checks.extend(trace_invariants(&report.trace, &config.params));
    Ok(checks)
}

/// Descent and prox-parameter invariants over consecutive trace entries.
fn trace_invariants(trace: &[TraceEntry], params: &improx::OuterParams) -> Vec<Check> {
    let sigma = 0.5 * (params.kappa - params.lambda);
    let mut descent_ok = true;
    let mut mu_ok = true;
    let mut feas_ok = true;
    let mut eps_ok = true;
    for e in trace {
        let d2 = e.step_norm * e.step_norm;
        if e.serious && e.h_candidate > e.h_center - sigma * d2 + 1e-9 * (1.0 + e.h_center.abs())
        {
            descent_ok = false;
        }
        if e.eps > 0.5 * params.lambda * d2 + 1e-9 * (1.0 + e.h_center.abs()) {
            eps_ok = false;
        }
    }
    for w in trace.windows(2) {
        let expected = if w[0].serious {
            w[0].mu
        } else {
            (params.growth_factor * w[0].mu).max(w[0].mu + params.growth_increment)
        };
        if (w[1].mu - expected).abs() > 1e-12 * (1.0 + expected) {
            mu_ok = false;
        }
        if w[0].c <= 0.0 && w[1].c > 1e-8 * (1.0 + w[0].c.abs()) {
            feas_ok = false;
        }
    }
    vec![
        Check {
            name: "serious-step descent inequality".into(),
            pass: descent_ok,
            detail: "H(y;x) <= H(x;x) - ((kappa-lambda)/2)||y-x||^2 at serious steps".into(),
        },
        Check {
            name: "inexactness bound".into(),
            pass: eps_ok,
            detail: "eps <= (lambda/2)||y-x||^2 at every iteration".into(),
        },
        Check {
            name: "prox-parameter schedule".into(),
            pass: mu_ok,
            detail: "mu constant on serious steps, max(2mu, mu+kappa) on null steps".into(),
        },
        Check {
            name: "feasibility persistence".into(),
            pass: feas_ok,
            detail: "c stays nonpositive once nonpositive".into(),
        },
    ]
}
