//! The four subcommands. Each writes the config it ran with, then its
//! artifacts, into the run directory.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use poisson_vga::elbo::{elbo, GaussianState};
use poisson_vga::hyper::{
    log_grid, profiled_joint_bound, run_hierarchical, update_alpha, HyperFlag, HyperTrace,
};
use poisson_vga::linalg::{symmetric_spectral_norm, SparsityMask};
use poisson_vga::validate::{
    compare_gaussians, hpd_intervals_gaussian, laplace_approximation, mh_independence_sampler,
    GaussianComparison, Interval,
};
use poisson_vga::vga::{run_vga, SolverMode, SolverReport, VgaConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Cell, RunDir, ARTIFACT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Lowrank,
    Sparsity,
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<SolverMode>,
    pub rank: Option<usize>,
    pub sparsity: Option<usize>,
    pub timings: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.problem.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.solver.mode = mode;
        }
        if let Some(rank) = self.rank {
            cfg.solver.rank = Some(rank);
        }
        if let Some(s) = self.sparsity {
            cfg.solver.sparsity = Some(s);
        }
        if self.timings {
            cfg.emit.timings = true;
        }
    }
}

/// What a command wrote; printed to stdout as one JSON line.
#[derive(Debug, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub output_dir: String,
    pub artifacts: Vec<String>,
}

fn open(cfg: &RunConfig) -> Result<RunDir, CliError> {
    cfg.validate()?;
    let mut dir = RunDir::create(&cfg.output_dir)?;
    dir.text("config.toml", &cfg.to_toml())?;
    Ok(dir)
}

fn finish(command: &'static str, cfg: &RunConfig, dir: RunDir) -> Outcome {
    Outcome {
        command,
        output_dir: cfg.output_dir.display().to_string(),
        artifacts: dir.written,
    }
}

fn strip_timing(mut report: SolverReport, cfg: &RunConfig) -> SolverReport {
    if !cfg.emit.timings {
        report.wall_time_seconds = None;
    }
    report
}

fn relative_error(x: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (x - truth).norm() / truth.norm()
}

fn mean_rows(state: &GaussianState, x_true: &DVector<f64>) -> Vec<Vec<Cell>> {
    let c = state.cov.as_matrix();
    (0..state.dim())
        .map(|i| {
            vec![
                i.into(),
                state.mean[i].into(),
                c[(i, i)].into(),
                x_true[i].into(),
            ]
        })
        .collect()
}

const MEAN_COLUMNS: [&str; 4] = ["index", "mean", "variance", "x_true"];

fn write_state(
    dir: &mut RunDir,
    cfg: &RunConfig,
    state: &GaussianState,
    x_true: &DVector<f64>,
    mask: Option<&SparsityMask>,
) -> Result<(), CliError> {
    if cfg.emit.csv {
        dir.csv("mean.csv", "mean", &MEAN_COLUMNS, &mean_rows(state, x_true))?;
    }
    let c = state.cov.as_matrix();
    match mask {
        Some(mask) if cfg.emit.csv => {
            let rows: Vec<Vec<Cell>> = mask
                .iter()
                .map(|(i, j)| vec![i.into(), j.into(), c[(i, j)].into()])
                .collect();
            dir.csv(
                "cov_masked.csv",
                "cov_masked",
                &["row", "col", "value"],
                &rows,
            )?;
        }
        None if cfg.emit.binary => dir.vgam("cov.vgam", c)?,
        _ => {}
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    command: &'static str,
    version: u32,
    problem: String,
    unknowns: usize,
    observations: usize,
    alpha: f64,
    elbo: f64,
    relative_error_to_truth: f64,
    #[serde(flatten)]
    solver: SolverReport,
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut dir = open(cfg)?;
    let alpha = cfg.alpha()?;
    let built = cfg.build(alpha)?;
    let p = &built.problem;
    let vcfg = cfg.vga_config(p.dim())?;
    let (state, report) = run_vga(p, &vcfg).map_err(CliError::from_setup)?;
    write_state(&mut dir, cfg, &state, &built.x_true, vcfg.mask.as_deref())?;
    if cfg.emit.json {
        dir.json(
            "report.json",
            &SolveReport {
                command: "solve",
                version: ARTIFACT_VERSION,
                problem: cfg.problem.name.to_string(),
                unknowns: p.dim(),
                observations: p.data.len(),
                alpha,
                elbo: report.elbo_trace.last().copied().unwrap_or(f64::NAN),
                relative_error_to_truth: relative_error(&state.mean, &built.x_true),
                solver: strip_timing(report, cfg),
            },
        )?;
    }
    Ok(finish("solve", cfg, dir))
}

#[derive(Serialize)]
struct HyperReport {
    command: &'static str,
    version: u32,
    problem: String,
    a: f64,
    b: f64,
    alpha_init: f64,
    alpha_star: f64,
    converged: bool,
    em_steps: usize,
    flags: Vec<HyperFlag>,
    /// `|α(x̄*, C*) - α*| / α*` for one more M-step at the returned state.
    fixed_point_residual: f64,
    elbo: f64,
    relative_error_to_truth: f64,
    grid_argmax_alpha: f64,
    /// Ratio of neighbouring grid points.
    grid_cell_ratio: f64,
    trace: HyperTrace,
}

pub fn cmd_hyper(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut dir = open(cfg)?;
    let m_probe = cfg.build(1.0)?.problem.dim();
    let hcfg = cfg.hyper_config(m_probe)?;
    let built = cfg.build(hcfg.alpha_init)?;
    let p = &built.problem;
    let res = run_hierarchical(p, &hcfg).map_err(CliError::from_setup)?;
    let t = &res.trace;

    let grid = log_grid(res.alpha, cfg.hyper.grid_spread, cfg.hyper.grid_points);
    let bounds: Vec<f64> = grid
        .par_iter()
        .map(|&a| profiled_joint_bound(p, a, &hcfg, Some(&res.state)).map(|(j, _)| j))
        .collect::<Result<_, _>>()?;
    let best = bounds
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .expect("grid has at least two points");

    if cfg.emit.csv {
        let rows: Vec<Vec<Cell>> = (0..t.alpha_sequence.len())
            .map(|k| {
                vec![
                    k.into(),
                    t.alpha_sequence[k].into(),
                    t.psi_sequence[k].into(),
                    t.joint_bound_sequence[k].into(),
                ]
            })
            .collect();
        dir.csv(
            "hyper_trace.csv",
            "hyper_trace",
            &["k", "alpha", "psi", "joint_bound"],
            &rows,
        )?;
        let rows: Vec<Vec<Cell>> = grid
            .iter()
            .zip(&bounds)
            .map(|(&a, &j)| vec![a.into(), j.into()])
            .collect();
        dir.csv(
            "alpha_grid.csv",
            "alpha_grid",
            &["alpha", "joint_bound"],
            &rows,
        )?;
    }
    let final_problem = p.with_alpha(res.alpha)?;
    write_state(
        &mut dir,
        cfg,
        &res.state,
        &built.x_true,
        hcfg.vga.mask.as_deref(),
    )?;
    if cfg.emit.json {
        let next = update_alpha(&res.state, p.prior.structure(), hcfg.a, hcfg.b)?;
        dir.json(
            "report.json",
            &HyperReport {
                command: "hyper",
                version: ARTIFACT_VERSION,
                problem: cfg.problem.name.to_string(),
                a: hcfg.a,
                b: hcfg.b,
                alpha_init: hcfg.alpha_init,
                alpha_star: res.alpha,
                converged: t.converged,
                em_steps: t.alpha_sequence.len().saturating_sub(1),
                flags: t.flags.clone(),
                fixed_point_residual: (next - res.alpha).abs() / res.alpha,
                elbo: elbo(&res.state, &final_problem)?.total,
                relative_error_to_truth: relative_error(&res.state.mean, &built.x_true),
                grid_argmax_alpha: grid[best],
                grid_cell_ratio: grid[1] / grid[0],
                trace: t.clone(),
            },
        )?;
    }
    Ok(finish("hyper", cfg, dir))
}

#[derive(Serialize)]
struct ComparisonRow {
    name: &'static str,
    #[serde(flatten)]
    metrics: GaussianComparison,
}

#[derive(Serialize)]
struct ValidateReport {
    command: &'static str,
    version: u32,
    problem: String,
    alpha: f64,
    acceptance_rate: f64,
    chain_length: usize,
    burn_in: usize,
    n_samples: usize,
    thin: usize,
    max_mean_standard_error: f64,
    comparisons: Vec<ComparisonRow>,
    relative_error_to_truth_vga: f64,
    relative_error_to_truth_laplace: f64,
    relative_error_to_truth_mcmc: f64,
    solver: SolverReport,
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut dir = open(cfg)?;
    let alpha = cfg.alpha()?;
    let built = cfg.build(alpha)?;
    let p = &built.problem;
    let vcfg = cfg.vga_config(p.dim())?;
    let (vga, report) = run_vga(p, &vcfg).map_err(CliError::from_setup)?;
    let laplace = laplace_approximation(p)?;
    let store = cfg.emit.csv || cfg.mcmc.export_chain;
    let chain =
        mh_independence_sampler(p, &vga, &cfg.mcmc_config(store)).map_err(CliError::from_setup)?;
    let mcmc = chain.as_gaussian()?;

    if cfg.emit.csv {
        let gamma = cfg.mcmc.gamma;
        let iv = hpd_intervals_gaussian(&vga, gamma)?;
        let il = hpd_intervals_gaussian(&laplace, gamma)?;
        let missing = Interval {
            lower: f64::NAN,
            upper: f64::NAN,
        };
        let rows: Vec<Vec<Cell>> = (0..p.dim())
            .map(|i| {
                let im = chain.intervals.as_ref().map_or(missing, |v| v[i]);
                vec![
                    i.into(),
                    iv[i].lower.into(),
                    iv[i].upper.into(),
                    il[i].lower.into(),
                    il[i].upper.into(),
                    im.lower.into(),
                    im.upper.into(),
                    built.x_true[i].into(),
                ]
            })
            .collect();
        dir.csv(
            "hpd.csv",
            "hpd",
            &[
                "index",
                "vga_lower",
                "vga_upper",
                "laplace_lower",
                "laplace_upper",
                "mcmc_lower",
                "mcmc_upper",
                "x_true",
            ],
            &rows,
        )?;
    }
    if cfg.mcmc.export_chain {
        if let Some(samples) = &chain.samples {
            dir.vgam("chain.vgam", samples)?;
        }
    }
    if cfg.emit.json {
        dir.json(
            "compare.json",
            &ValidateReport {
                command: "validate",
                version: ARTIFACT_VERSION,
                problem: cfg.problem.name.to_string(),
                alpha,
                acceptance_rate: chain.acceptance_rate,
                chain_length: cfg.mcmc.chain_length,
                burn_in: cfg.mcmc.burn_in,
                n_samples: chain.n_samples,
                thin: chain.thin,
                max_mean_standard_error: chain.mean_standard_error.max(),
                comparisons: vec![
                    ComparisonRow {
                        name: "mcmc_vs_vga",
                        metrics: compare_gaussians(&mcmc, &vga)?,
                    },
                    ComparisonRow {
                        name: "laplace_vs_vga",
                        metrics: compare_gaussians(&laplace, &vga)?,
                    },
                    ComparisonRow {
                        name: "mcmc_vs_laplace",
                        metrics: compare_gaussians(&mcmc, &laplace)?,
                    },
                ],
                relative_error_to_truth_vga: relative_error(&vga.mean, &built.x_true),
                relative_error_to_truth_laplace: relative_error(&laplace.mean, &built.x_true),
                relative_error_to_truth_mcmc: relative_error(&chain.mean, &built.x_true),
                solver: strip_timing(report, cfg),
            },
        )?;
    }
    Ok(finish("validate", cfg, dir))
}

/// Errors of one sweep point against the dense reference.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub point: usize,
    pub mean_error: f64,
    pub mean_error_rel: f64,
    /// Spectral norm of the covariance difference.
    pub cov_error: f64,
    /// Frobenius norm of the difference over that of the reference.
    pub cov_error_rel: f64,
    pub converged: bool,
    pub outer_iterations: usize,
}

fn bench_row(
    point: usize,
    state: &GaussianState,
    report: &SolverReport,
    reference: &GaussianState,
) -> BenchRow {
    let dm = &state.mean - &reference.mean;
    let dc: DMatrix<f64> = state.cov.as_matrix() - reference.cov.as_matrix();
    BenchRow {
        point,
        mean_error: dm.norm(),
        mean_error_rel: dm.norm() / reference.mean.norm(),
        cov_error: symmetric_spectral_norm(&dc),
        cov_error_rel: dc.norm() / reference.cov.as_matrix().norm(),
        converged: report.converged,
        outer_iterations: report.outer_iterations,
    }
}

#[derive(Serialize)]
struct BenchReport<'a> {
    command: &'static str,
    version: u32,
    study: Study,
    problem: String,
    alpha: f64,
    reference_elbo: f64,
    reference_converged: bool,
    rows: &'a [BenchRow],
}

pub fn cmd_bench(cfg: &RunConfig, study: Study) -> Result<Outcome, CliError> {
    let mut dir = open(cfg)?;
    let alpha = cfg.alpha()?;
    let built = cfg.build(alpha)?;
    let p = &built.problem;
    let base = cfg.vga_config(p.dim())?;
    let dense = VgaConfig {
        mode: SolverMode::Dense,
        rank: None,
        mask: None,
        ..base.clone()
    };
    let (reference, ref_report) = run_vga(p, &dense).map_err(CliError::from_setup)?;

    let points: Vec<usize> = match study {
        Study::Lowrank => cfg.bench.ranks.clone(),
        Study::Sparsity => cfg.bench.sparsities.clone(),
    };
    let rows: Vec<BenchRow> = points
        .par_iter()
        .map(|&k| {
            let point_cfg = match study {
                Study::Lowrank => VgaConfig {
                    mode: SolverMode::LowRank,
                    rank: Some(k),
                    mask: None,
                    ..base.clone()
                },
                Study::Sparsity => VgaConfig {
                    mask: Some(std::sync::Arc::new(
                        SparsityMask::banded(p.dim(), k).map_err(CliError::from_setup)?,
                    )),
                    ..dense.clone()
                },
            };
            let (state, report) = run_vga(p, &point_cfg).map_err(CliError::from_setup)?;
            Ok(bench_row(k, &state, &report, &reference))
        })
        .collect::<Result<_, CliError>>()?;

    let (name, column) = match study {
        Study::Lowrank => ("bench_lowrank", "rank"),
        Study::Sparsity => ("bench_sparsity", "sparsity"),
    };
    if cfg.emit.csv {
        let table: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.point.into(),
                    r.mean_error.into(),
                    r.mean_error_rel.into(),
                    r.cov_error.into(),
                    r.cov_error_rel.into(),
                    r.converged.into(),
                    r.outer_iterations.into(),
                ]
            })
            .collect();
        dir.csv(
            &format!("{name}.csv"),
            name,
            &[
                column,
                "mean_error",
                "mean_error_rel",
                "cov_error",
                "cov_error_rel",
                "converged",
                "outer_iterations",
            ],
            &table,
        )?;
    }
    if cfg.emit.json {
        dir.json(
            &format!("{name}.json"),
            &BenchReport {
                command: "bench",
                version: ARTIFACT_VERSION,
                study,
                problem: cfg.problem.name.to_string(),
                alpha,
                reference_elbo: ref_report.elbo_trace.last().copied().unwrap_or(f64::NAN),
                reference_converged: ref_report.converged,
                rows: &rows,
            },
        )?;
    }
    Ok(finish("bench", cfg, dir))
}
