//! The five subcommands. Every result file is written atomically.

use std::path::Path;
use std::process::ExitCode;

use rayon::prelude::*;
use serde::Serialize;
use steklov_core::assembly::{Binarize, ProblemParams};
use steklov_core::eigensolver::{solve as solve_pair, solve_dirichlet, EigenPair};
use steklov_core::mesh::Mesh;
use steklov_core::rearrange::{arc_defect, optimize_potential, symmetry_check as run_symmetry, OptimizationTrace};
use steklov_core::shapederiv::shape_derivative_fd;

use crate::config::RunConfig;
use crate::CliError;

/// Writes `contents` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, &target))
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", target.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn boundary_trace_csv(mesh: &Mesh, pair: &EigenPair) -> String {
    let mut out = String::from("s,u\n");
    for (k, v) in mesh.boundary_vertices().enumerate() {
        out.push_str(&format!("{:?},{:?}\n", mesh.cum_arclength()[k], pair.u.values()[v]));
    }
    out
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<ExitCode, CliError> {
    let mesh = cfg.mesh()?;
    let params = cfg.params()?;
    let phi = cfg.potential(&mesh)?;
    let opts = cfg.solver(params.p)?;
    let pair = solve_pair(&mesh, &phi, &params, &opts)?;
    write_atomic(out, "eigenpair.json", &pair.to_json())?;
    write_atomic(out, "boundary_trace.csv", &boundary_trace_csv(&mesh, &pair))?;
    println!("lambda = {:.12}", pair.lambda);
    println!("iterations = {}, residual = {:e}, converged = {}", pair.iterations, pair.residual, pair.converged);
    if pair.positivity_violation {
        println!("warning: the eigenfunction has nodal values below -1e-8");
    }
    Ok(status(pair.converged))
}

#[derive(Serialize)]
struct OptimizeSummary {
    lambda: f64,
    converged: bool,
    stop_reason: steklov_core::rearrange::StopReason,
    fixed_point: bool,
    outer_iterations: usize,
    mass: f64,
    arc_defect: Option<f64>,
    binarized_lambda: Option<f64>,
}

fn summarize(mesh: &Mesh, trace: &OptimizationTrace) -> OptimizeSummary {
    OptimizeSummary {
        lambda: trace.final_lambda(),
        converged: trace.converged,
        stop_reason: trace.stop_reason,
        fixed_point: trace.fixed_point,
        outer_iterations: trace.outer_iterations,
        mass: trace.final_potential().mass(),
        arc_defect: mesh.is_disk().then(|| arc_defect(mesh, trace.final_potential())),
        binarized_lambda: trace.binarized.as_ref().map(|(_, l)| *l),
    }
}

pub fn optimize(cfg: &RunConfig, out: &Path, binarize: Option<Binarize>) -> Result<ExitCode, CliError> {
    let mesh = cfg.mesh()?;
    let params = cfg.params()?;
    let a = cfg.mass(&mesh)?;
    let mut opts = cfg.optimize_options(params.p)?;
    opts.binarize = binarize;
    let trace = optimize_potential(&mesh, &params, a, &opts).map_err(|e| CliError::Numerical(e.to_string()))?;
    let potential = match &trace.binarized {
        Some((bin, _)) => bin,
        None => trace.final_potential(),
    };
    let summary = summarize(&mesh, &trace);
    write_atomic(out, "trace.json", &trace.to_json())?;
    write_atomic(out, "trace.csv", &trace.to_csv())?;
    write_atomic(out, "potential.json", &potential.to_json())?;
    write_atomic(out, "optimize_summary.json", &to_json(&summary))?;
    println!("Lambda(sigma, a) <= {:.12}", trace.final_lambda());
    println!(
        "outer iterations = {}, stop = {:?}, fixed point = {}",
        trace.outer_iterations, trace.stop_reason, trace.fixed_point
    );
    if let Some(d) = summary.arc_defect {
        println!("arc defect = {d:e} (bound {:e})", 2.0 * mesh.max_edge_length());
    }
    if let Some(l) = summary.binarized_lambda {
        println!("binarized potential: lambda = {l:.12}");
    }
    Ok(status(trace.converged))
}

fn sweep_csv(rows: &[(f64, f64)], reference: Option<f64>) -> String {
    let mut out = String::from("sigma,Lambda_sigma,Lambda_inf_reference\n");
    for (s, l) in rows {
        match reference {
            Some(r) => out.push_str(&format!("{s:?},{l:?},{r:?}\n")),
            None => out.push_str(&format!("{s:?},{l:?},\n")),
        }
    }
    out
}

/// Slack for the ordering checks along the sweep.
const SWEEP_SLACK: f64 = 1e-8;

pub fn sigma_sweep(cfg: &RunConfig, out: &Path) -> Result<ExitCode, CliError> {
    let mesh = cfg.mesh()?;
    let base = cfg.params()?;
    let sigmas = cfg.sigmas()?;
    let a = cfg.mass(&mesh)?;
    let opts = cfg.optimize_options(base.p)?;
    let runs: Vec<Result<OptimizationTrace, String>> = sigmas
        .par_iter()
        .map(|&sigma| {
            let params = ProblemParams { sigma, ..base };
            optimize_potential(&mesh, &params, a, &opts).map_err(|e| format!("sigma = {sigma}: {e}"))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failure = None;
    for (&sigma, run) in sigmas.iter().zip(&runs) {
        match run {
            Ok(trace) => rows.push((sigma, trace.final_lambda())),
            Err(e) => {
                failure.get_or_insert_with(|| e.clone());
            }
        }
    }
    if let Some(e) = failure {
        write_atomic(out, "sweep.csv", &sweep_csv(&rows, None))?;
        return Err(CliError::Numerical(e));
    }
    let last = runs.last().and_then(|r| r.as_ref().ok()).expect("sweep is non-empty");
    let reference = last
        .final_potential()
        .support_region(&mesh)
        .and_then(|region| solve_dirichlet(&mesh, &region, &base, &opts.solver))
        .map(|pair| pair.lambda);
    let reference = match reference {
        Ok(r) => r,
        Err(e) => {
            write_atomic(out, "sweep.csv", &sweep_csv(&rows, None))?;
            return Err(CliError::Numerical(format!("Dirichlet reference: {e}")));
        }
    };
    write_atomic(out, "sweep.csv", &sweep_csv(&rows, Some(reference)))?;
    println!("{:>12}  {:>18}  {:>14}", "sigma", "Lambda(sigma, a)", "gap");
    for (s, l) in &rows {
        println!("{s:>12}  {l:>18.12}  {:>14.6e}", reference - l);
    }
    println!("{:>12}  {:>18.12}", "infinity", reference);
    let monotone = rows.windows(2).all(|w| w[1].1 >= w[0].1 - SWEEP_SLACK * w[0].1.abs());
    let bounded = rows.iter().all(|&(_, l)| l <= reference + SWEEP_SLACK);
    if !monotone {
        eprintln!("Lambda(sigma, a) decreases along the sweep");
    }
    if !bounded {
        eprintln!("Lambda(sigma, a) exceeds the Dirichlet reference");
    }
    Ok(status(monotone && bounded))
}

/// Relative error up to which the shape-derivative run counts as a success.
const SHAPE_TOLERANCE: f64 = 0.05;

pub fn shape_deriv(cfg: &RunConfig, out: &Path) -> Result<ExitCode, CliError> {
    let mesh = cfg.mesh()?;
    let params = cfg.params()?;
    let (region, field, t_steps, convention) = cfg.region(&mesh)?;
    let opts = cfg.solver(params.p)?;
    let report = shape_derivative_fd(&mesh, &region, &params, &field, &t_steps, &opts, convention)?;
    write_atomic(out, "shape_derivative.json", &report.to_json())?;
    print!("{}", report.table());
    if let Some(order) = report.observed_order() {
        println!("observed order = {order:.3}");
    }
    println!("relative error = {:e}, sign consistent = {}", report.relative_error, report.sign_consistent);
    if !report.vertex_crossings.is_empty() {
        println!("note: endpoints cross mesh vertices at t = {:?}", report.vertex_crossings);
    }
    Ok(status(report.relative_error <= SHAPE_TOLERANCE))
}

pub fn symmetry_check(cfg: &RunConfig, out: &Path) -> Result<ExitCode, CliError> {
    let mesh = cfg.mesh()?;
    if !mesh.is_disk() {
        return Err(CliError::Usage("symmetry-check needs disk geometry".into()));
    }
    let params = cfg.params()?;
    let a = cfg.mass(&mesh)?;
    let opts = cfg.optimize_options(params.p)?;
    let report = run_symmetry(&mesh, &params, a, &cfg.symmetry.seeds, &opts)?;
    write_atomic(out, "symmetry.json", &to_json(&report))?;
    println!("{:>6}  {:>18}  {:>12}", "seed", "lambda", "arc defect");
    for r in &report.runs {
        println!("{:>6}  {:>18.12}  {:>12.3e}", r.seed, r.lambda, r.arc_defect);
    }
    println!(
        "spread = {:e}, defect bound = {:e}, passed = {}",
        report.lambda_spread, report.defect_bound, report.passed
    );
    Ok(status(report.passed))
}
