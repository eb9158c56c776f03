//! Subcommand pipelines: resolved configuration in, files out.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gaussdeconv::assumptions::{check_assumptions, AssumptionReport};
use gaussdeconv::asymptotics::scan_report;
use gaussdeconv::deconv::{neumann_series, solve_direct_quadrature, DeconvProblem, OracleValue};
use gaussdeconv::gausswalk::{asymptotic_amplitude, WalkTwoPoint};
use gaussdeconv::srbm::{
    amplitude_consistency, c_phi, check_domination, estimate_lambda_c, sample_gamma,
};

use crate::config::{OracleMethod, ProblemConfig, SrbmRunConfig, SrbmTask, WalkConfig};
use crate::manifest::RunSpec;
use crate::output::{self, num, OutputDir};

/// Verdict of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// The computation finished but a validation criterion failed.
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn execute(run: &RunSpec, out: &mut OutputDir) -> Result<Outcome> {
    match run {
        RunSpec::CheckAssumptions(cfg) => run_check_assumptions(cfg, out),
        RunSpec::WalkC(cfg) => run_walk_c(cfg, out),
        RunSpec::Solve(cfg) => run_solve(cfg, out),
        RunSpec::Oracle(cfg) => run_oracle(cfg, out),
        RunSpec::ValidateAsymptotics(cfg) => run_validate(cfg, out),
        RunSpec::Srbm(cfg) => run_srbm(cfg, out),
    }
}

/// Print the summary and keep a copy next to the data.
fn summarize(out: &mut OutputDir, summary: &str) -> Result<()> {
    print!("{summary}");
    out.text("summary.txt", summary)
}

fn problem(cfg: &ProblemConfig) -> Result<DeconvProblem> {
    let (j, g) = cfg.kernels()?;
    DeconvProblem::new(j, g, cfg.solver.clone()).context("cannot set up the problem")
}

fn coords(x: &[f64]) -> impl Iterator<Item = String> + '_ {
    x.iter().map(|v| num(*v))
}

#[derive(Serialize)]
struct AssumptionsDocument<'a> {
    pass: bool,
    j: &'a AssumptionReport,
    g: &'a AssumptionReport,
}

fn run_check_assumptions(cfg: &ProblemConfig, out: &mut OutputDir) -> Result<Outcome> {
    let (j, g) = cfg.kernels()?;
    let (rj, rg) = check_assumptions(&j, &g, &cfg.check)?;
    let pass = rj.pass() && rg.pass();
    let doc = AssumptionsDocument {
        pass,
        j: &rj,
        g: &rg,
    };
    out.text(
        "assumptions.toml",
        &toml::to_string(&doc).context("cannot serialize the assumption report")?,
    )?;
    let summary = format!("{}\n{}\n", rj.summary("J"), rg.summary("g"));
    summarize(out, &summary)?;
    Ok(Outcome::from_pass(pass))
}

fn run_walk_c(cfg: &WalkConfig, out: &mut OutputDir) -> Result<Outcome> {
    let sigma = cfg.covariance()?;
    let points = cfg.evaluation_points()?;
    let walk = WalkTwoPoint::new(sigma.clone(), cfg.rel_tol).context("`rel_tol`")?;
    let values = walk.evaluate_many(&points)?;
    let d = sigma.dim();
    let amplitude = asymptotic_amplitude(&sigma);
    let rows = points.iter().zip(&values).map(|(x, v)| {
        let q = sigma.inverse_quadratic_form(x);
        let asymptotic = if q > 0.0 {
            amplitude * q.powf(-(d as f64 - 2.0) / 2.0)
        } else {
            f64::INFINITY
        };
        coords(x)
            .chain([v.value, v.tail_bound, asymptotic, v.value - asymptotic].map(num))
            .collect()
    });
    out.csv(
        "walk_c.csv",
        output::coordinate_header(d, output::WALK_C_COLUMNS),
        rows,
    )?;
    Ok(Outcome::Pass)
}

fn run_solve(cfg: &ProblemConfig, out: &mut OutputDir) -> Result<Outcome> {
    let points = cfg.evaluation_points()?;
    let problem = problem(cfg)?;
    let result = problem.solve(&points)?;
    let rows = result.points.iter().map(|p| {
        coords(&p.x)
            .chain([p.c, p.f, p.h, p.g, p.err_est].map(num))
            .collect()
    });
    out.csv(
        "solve.csv",
        output::coordinate_header(problem.dim(), output::SOLVE_COLUMNS),
        rows,
    )?;
    let mut summary = String::new();
    writeln!(summary, "engine: {:?}", result.engine)?;
    writeln!(summary, "subcritical: {}", result.subcritical)?;
    writeln!(summary, "sigma: {:?}", result.sigma.entries())?;
    writeln!(summary, "g_hat(0): {}", result.g_hat0)?;
    writeln!(summary, "K_IR: {}", result.k_ir)?;
    let aliased = result.points.iter().filter(|p| p.aliased).count();
    if aliased > 0 {
        writeln!(summary, "aliased points: {aliased}")?;
    }
    for note in &result.notes {
        writeln!(summary, "note: {note}")?;
    }
    summarize(out, &summary)?;
    Ok(Outcome::Pass)
}

fn run_oracle(cfg: &ProblemConfig, out: &mut OutputDir) -> Result<Outcome> {
    let points = cfg.evaluation_points()?;
    let problem = problem(cfg)?;
    let values: Vec<OracleValue> = match cfg.oracle.method {
        OracleMethod::Quadrature => {
            solve_direct_quadrature(&problem, &points, &cfg.oracle.quadrature)?
        }
        OracleMethod::Series => neumann_series(&problem, &points)?,
    };
    let rows = points
        .iter()
        .zip(&values)
        .map(|(x, v)| coords(x).chain([v.value, v.error].map(num)).collect());
    out.csv(
        "oracle.csv",
        output::coordinate_header(problem.dim(), output::ORACLE_COLUMNS),
        rows,
    )?;
    Ok(Outcome::Pass)
}

fn run_validate(cfg: &ProblemConfig, out: &mut OutputDir) -> Result<Outcome> {
    let Some(scan) = &cfg.scan else {
        bail!("`validate-asymptotics` needs a `[scan]` table with `directions` and `radii`");
    };
    cfg.check_scan(scan)?;
    let problem = problem(cfg)?;
    let report = scan_report(&problem, &scan.directions, &scan.radii, cfg.tolerances)?;
    let d = problem.dim();
    let header: Vec<String> = std::iter::once("direction".to_string())
        .chain((1..=d).map(|i| format!("v{i}")))
        .chain(output::FIT_COLUMNS.iter().map(|c| c.to_string()))
        .collect();
    let rows = report.fits.iter().enumerate().map(|(k, fit)| {
        std::iter::once(k.to_string())
            .chain(coords(&fit.direction))
            .chain(
                [
                    fit.last_prefactor(),
                    fit.predicted,
                    fit.deviation,
                    fit.exponent,
                    fit.g_exponent,
                ]
                .map(num),
            )
            .collect()
    });
    out.csv("asymptotics.csv", header, rows)?;
    let plot = report.fits.iter().enumerate().flat_map(|(k, fit)| {
        fit.radii.iter().zip(&fit.prefactors).map(move |(r, p)| {
            vec![k.to_string(), num(*r), num(*p), num(fit.predicted)]
        })
    });
    out.csv("prefactors.csv", output::PREFACTOR_HEADER, plot)?;
    let mut summary = report.table();
    for note in &report.notes {
        writeln!(summary, "note: {note}")?;
    }
    summarize(out, &summary)?;
    Ok(Outcome::from_pass(report.pass))
}

fn on_axis(d: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = r;
    x
}

fn run_srbm(cfg: &SrbmRunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let model = &cfg.model;
    let d = model.dim;
    let mut summary = String::new();
    let outcome = match cfg.task {
        SrbmTask::Gamma => {
            let est = sample_gamma(model)?;
            let rows = est
                .probes
                .iter()
                .map(|p| {
                    let five_c = 5.0 * c_phi(&on_axis(d, p.radius))?;
                    Ok([p.radius, p.estimate, p.stderr, p.reference, five_c].map(num).to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            out.csv("srbm.csv", output::GAMMA_HEADER, rows)?;
            let within = est
                .probes
                .iter()
                .filter(|p| (p.estimate - p.reference).abs() <= 3.0 * p.stderr)
                .count();
            writeln!(summary, "task: gamma (N = {}, alpha = {})", est.legs, model.alpha)?;
            writeln!(summary, "density method: {:?}", est.method)?;
            if let Some(h) = est.bandwidth {
                writeln!(summary, "bandwidth: {h}")?;
            }
            writeln!(
                summary,
                "mean weight: {} ± {}",
                est.mean_weight, est.mean_weight_stderr
            )?;
            writeln!(summary, "effective sample size: {:.1}", est.effective_sample_size)?;
            writeln!(
                summary,
                "probes within 3 stderr of the free reference: {within}/{}",
                est.probes.len()
            )?;
            Outcome::Pass
        }
        SrbmTask::Lambda => {
            let est = estimate_lambda_c(model, cfg.lambda.n_max)?;
            let rows = est
                .mean_weights
                .iter()
                .map(|(n, w, se)| vec![n.to_string(), num(*w), num(*se)]);
            out.csv("lambda.csv", output::LAMBDA_HEADER, rows)?;
            writeln!(summary, "task: lambda (alpha = {})", model.alpha)?;
            writeln!(
                summary,
                "lambda_c: {} (95% CI {} .. {})",
                est.lambda_c, est.ci_low, est.ci_high
            )?;
            writeln!(summary, "log-slope: {} ± {}", est.slope, est.slope_stderr)?;
            writeln!(summary, "monotone decay: {}", est.monotone)?;
            Outcome::Pass
        }
        SrbmTask::Domination => {
            let spec = cfg.domination;
            let lambda = match spec.lambda {
                Some(l) => l,
                None => {
                    let est = estimate_lambda_c(model, spec.n_max)?;
                    writeln!(summary, "estimated lambda_c: {}", est.lambda_c)?;
                    spec.lambda_factor * est.lambda_c
                }
            };
            let report = check_domination(model, lambda, spec.n_max)?;
            let rows = report.probes.iter().map(|p| {
                vec![
                    num(p.radius),
                    num(p.estimate),
                    num(p.stderr),
                    num(p.bound),
                    p.pass.to_string(),
                ]
            });
            out.csv("domination.csv", output::DOMINATION_HEADER, rows)?;
            writeln!(
                summary,
                "task: domination (alpha = {}, lambda = {}, N_max = {})",
                model.alpha, report.lambda, report.n_max
            )?;
            writeln!(
                summary,
                "minimum effective sample size: {:.1}",
                report.min_effective_sample_size
            )?;
            writeln!(summary, "verdict: {}", if report.pass { "PASS" } else { "FAIL" })?;
            Outcome::from_pass(report.pass)
        }
        SrbmTask::Amplitude => {
            let Some(spec) = &cfg.amplitude else {
                bail!("`task = \"amplitude\"` needs an `[amplitude]` table");
            };
            let report = amplitude_consistency(&spec.proxy()?)?;
            let row = vec![
                num(report.lambda),
                num(report.sigma2_moment),
                num(report.sigma2_derived),
                num(report.a_d),
                num(report.predicted),
                num(report.measured),
                num(report.band.0),
                num(report.band.1),
                report.within_band.to_string(),
            ];
            out.csv("amplitude.csv", output::AMPLITUDE_HEADER, [row])?;
            writeln!(summary, "task: amplitude")?;
            writeln!(summary, "lambda: {}", report.lambda)?;
            writeln!(
                summary,
                "predicted c_d: {}, measured: {}, band [{}, {}], within band: {}",
                report.predicted, report.measured, report.band.0, report.band.1, report.within_band
            )?;
            Outcome::Pass
        }
    };
    summarize(out, &summary)?;
    Ok(outcome)
}
