//! The run configuration: what to solve, with which prior and solver
//! settings, and where the artifacts go.
//!
//! Stored as TOML (`key = value` with dotted sections); a `.json` extension
//! selects JSON instead. Every field has a default, so an empty file is a
//! valid config for the phillips problem with an L2 prior.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use poisson_vga::hyper::HyperConfig;
use poisson_vga::linalg::{PcgOptions, RsvdOptions, SparsityMask};
use poisson_vga::model::{
    make_prior, make_test_problem, sample_poisson_data, PoissonProblem, PriorKind, ProblemName,
    ProblemParams, RateScale,
};
use poisson_vga::validate::McmcConfig;
use poisson_vga::vga::{InitCov, SolverMode, StopCriterion, VgaConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::seed::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub problem: ProblemSection,
    pub prior: PriorSection,
    pub solver: SolverSection,
    pub hyper: HyperSection,
    pub mcmc: McmcSection,
    pub bench: BenchSection,
    pub emit: EmitFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            problem: ProblemSection::default(),
            prior: PriorSection::default(),
            solver: SolverSection::default(),
            hyper: HyperSection::default(),
            mcmc: McmcSection::default(),
            bench: BenchSection::default(),
            emit: EmitFlags::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: ProblemName,
    /// Grid points (1D) or image side length (2D).
    pub size: usize,
    /// Root of every random stream of the run.
    pub seed: u64,
    /// Rescale the true solution so rates span `[rate_min, rate_max]`.
    pub scale_rates: bool,
    pub rate_min: f64,
    pub rate_max: f64,
    pub blur_band: usize,
    pub blur_variance: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        let params = ProblemParams::default();
        let rates = RateScale::default();
        Self {
            name: ProblemName::Phillips,
            size: 100,
            seed: 1,
            scale_rates: true,
            rate_min: rates.rate_min,
            rate_max: rates.rate_max,
            blur_band: params.blur_band,
            blur_variance: params.blur_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub kind: PriorKind,
    /// Prior strength for `solve`, `validate` and `bench`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Gamma hyperprior for `hyper`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hierarchical: Option<Hierarchical>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            kind: PriorKind::L2,
            alpha: Some(10.0),
            hierarchical: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hierarchical {
    pub a: f64,
    pub b: f64,
    pub alpha_init: f64,
    pub max_em: usize,
    pub alpha_tol: f64,
}

impl Default for Hierarchical {
    fn default() -> Self {
        let d = HyperConfig::default();
        Self {
            a: d.a,
            b: d.b,
            alpha_init: d.alpha_init,
            max_em: 1000,
            alpha_tol: d.alpha_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolverMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Banded covariance mask of total width `sparsity` (1 = diagonal).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    /// 4-neighbour mask on the image grid (2D problem only).
    pub grid_mask: bool,
    pub max_outer: usize,
    pub newton_steps_per_outer: usize,
    pub fixedpoint_steps_per_outer: usize,
    pub outer_tol_elbo: f64,
    pub mean_change_tol: f64,
    pub stop: StopCriterion,
    pub init_cov: InitCov,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
    pub rsvd_oversample: usize,
    pub rsvd_power_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let v = VgaConfig::default();
        Self {
            mode: v.mode,
            rank: None,
            sparsity: None,
            grid_mask: false,
            max_outer: v.max_outer,
            newton_steps_per_outer: v.newton_steps_per_outer,
            fixedpoint_steps_per_outer: v.fixedpoint_steps_per_outer,
            outer_tol_elbo: v.outer_tol_elbo,
            mean_change_tol: v.mean_change_tol,
            stop: v.stop,
            init_cov: v.init_cov,
            pcg_tol: v.pcg.tol,
            pcg_max_iter: v.pcg.max_iter,
            rsvd_oversample: v.rsvd.oversample,
            rsvd_power_iters: v.rsvd.power_iters,
        }
    }
}

/// Profiled-bound grid written by `hyper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSection {
    pub grid_points: usize,
    /// The grid spans `[α*/spread, α*·spread]` log-uniformly.
    pub grid_spread: f64,
}

impl Default for HyperSection {
    fn default() -> Self {
        Self {
            grid_points: 30,
            grid_spread: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub chain_length: usize,
    pub burn_in: usize,
    pub gamma: f64,
    /// Also write the stored draws to `chain.vgam`.
    pub export_chain: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        let d = McmcConfig::default();
        Self {
            chain_length: d.chain_length,
            burn_in: d.burn_in,
            gamma: d.gamma,
            export_chain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub ranks: Vec<usize>,
    pub sparsities: Vec<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            ranks: vec![2, 4, 6, 8, 10, 20],
            sparsities: vec![1, 3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub csv: bool,
    pub json: bool,
    pub binary: bool,
    /// Record wall-clock times (breaks byte-identical reruns).
    pub timings: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            binary: true,
            timings: false,
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = if is_json(path) {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to toml")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes to json")
    }

    /// Unknown dimensions and missing pieces are caught here, before any
    /// solver runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.problem.name == ProblemName::Blur2d && self.prior.kind != PriorKind::H1_2D
            || self.problem.name != ProblemName::Blur2d && self.prior.kind == PriorKind::H1_2D
        {
            return bad(format!(
                "prior {:?} does not fit problem {}",
                self.prior.kind, self.problem.name
            ));
        }
        if self.solver.grid_mask && self.problem.name != ProblemName::Blur2d {
            return bad("solver.grid_mask needs the blur2d problem".into());
        }
        if self.solver.grid_mask && self.solver.sparsity.is_some() {
            return bad("set either solver.sparsity or solver.grid_mask, not both".into());
        }
        if self.solver.mode != SolverMode::Dense && self.solver.rank.is_none() {
            return bad(format!("mode {} needs solver.rank", self.solver.mode));
        }
        if self.hyper.grid_points < 2 || !(self.hyper.grid_spread > 1.0) {
            return bad(
                "hyper.grid_points must be at least 2 and hyper.grid_spread above 1".into(),
            );
        }
        Ok(())
    }

    pub fn problem_params(&self) -> ProblemParams {
        let p = &self.problem;
        ProblemParams {
            blur_band: p.blur_band,
            blur_variance: p.blur_variance,
            rate_scale: p.scale_rates.then_some(RateScale {
                rate_min: p.rate_min,
                rate_max: p.rate_max,
            }),
        }
    }

    pub fn alpha(&self) -> Result<f64, CliError> {
        self.prior
            .alpha
            .ok_or_else(|| CliError::Config("prior.alpha is required for this command".into()))
    }

    /// Test problem, synthetic counts and the prior at strength `alpha`.
    pub fn build(&self, alpha: f64) -> Result<Built, CliError> {
        self.validate()?;
        let tp = make_test_problem(self.problem.name, self.problem.size, &self.problem_params())
            .map_err(CliError::from_setup)?;
        let data = sample_poisson_data(
            &tp.operator,
            &tp.x_true,
            substream(self.problem.seed, "data"),
        )?;
        let m = tp.operator.ncols();
        let prior = make_prior(self.prior.kind, alpha, m, None).map_err(CliError::from_setup)?;
        let problem = PoissonProblem::new(Arc::new(tp.operator), Arc::new(data), prior)
            .map_err(CliError::from_setup)?;
        Ok(Built {
            problem,
            x_true: tp.x_true,
        })
    }

    /// The covariance mask implied by the solver section, if any.
    pub fn mask(&self, m: usize) -> Result<Option<Arc<SparsityMask>>, CliError> {
        let s = &self.solver;
        let mask = if s.grid_mask
            || (s.mode == SolverMode::LowRankSparse
                && s.sparsity.is_none()
                && self.problem.name == ProblemName::Blur2d)
        {
            Some(SparsityMask::grid_neighbors(
                self.problem.size,
                self.problem.size,
            ))
        } else if let Some(w) = s.sparsity {
            Some(SparsityMask::banded(m, w).map_err(CliError::from_setup)?)
        } else {
            None
        };
        if s.mode == SolverMode::LowRankSparse && mask.is_none() {
            return Err(CliError::Config(
                "mode lowrank_sparse needs solver.sparsity or solver.grid_mask".into(),
            ));
        }
        Ok(mask.map(Arc::new))
    }

    pub fn vga_config(&self, m: usize) -> Result<VgaConfig, CliError> {
        let s = &self.solver;
        Ok(VgaConfig {
            max_outer: s.max_outer,
            newton_steps_per_outer: s.newton_steps_per_outer,
            fixedpoint_steps_per_outer: s.fixedpoint_steps_per_outer,
            outer_tol_elbo: s.outer_tol_elbo,
            mean_change_tol: s.mean_change_tol,
            stop: s.stop,
            pcg: PcgOptions {
                tol: s.pcg_tol,
                max_iter: s.pcg_max_iter,
                ..Default::default()
            },
            mode: s.mode,
            rank: s.rank,
            mask: self.mask(m)?,
            init_cov: s.init_cov,
            rsvd: RsvdOptions {
                oversample: s.rsvd_oversample,
                power_iters: s.rsvd_power_iters,
                seed: substream(self.problem.seed, "rsvd"),
            },
            ..Default::default()
        })
    }

    pub fn hyper_config(&self, m: usize) -> Result<HyperConfig, CliError> {
        let h = self.prior.hierarchical.clone().unwrap_or_default();
        Ok(HyperConfig {
            a: h.a,
            b: h.b,
            alpha_init: h.alpha_init,
            max_em: h.max_em,
            alpha_tol: h.alpha_tol,
            vga: self.vga_config(m)?,
        })
    }

    pub fn mcmc_config(&self, store_samples: bool) -> McmcConfig {
        McmcConfig {
            chain_length: self.mcmc.chain_length,
            burn_in: self.mcmc.burn_in,
            seed: substream(self.problem.seed, "mcmc"),
            store_samples,
            gamma: self.mcmc.gamma,
        }
    }
}

pub struct Built {
    pub problem: PoissonProblem,
    pub x_true: nalgebra::DVector<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        let mut c = RunConfig::default();
        c.problem.name = ProblemName::Heat;
        c.prior.kind = PriorKind::H1;
        c.prior.hierarchical = Some(Hierarchical {
            a: 2.0,
            ..Default::default()
        });
        c.solver.mode = SolverMode::LowRankSparse;
        c.solver.rank = Some(12);
        c.solver.sparsity = Some(3);
        c.mcmc.chain_length = 1234;
        c.emit.binary = false;
        c
    }

    #[test]
    fn toml_round_trip() {
        for c in [RunConfig::default(), sample()] {
            let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn json_round_trip() {
        let c = sample();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(
            toml::from_str::<RunConfig>("").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn dotted_sections_parse() {
        let c: RunConfig = toml::from_str(
            "output_dir = \"runs/a\"\n[problem]\nname = \"gravity\"\nsize = 64\n[prior]\nkind = \"h1\"\nalpha = 2.5\n[solver]\nmode = \"lowrank\"\nrank = 8\n",
        )
        .unwrap();
        assert_eq!(c.problem.name, ProblemName::Gravity);
        assert_eq!(c.prior.alpha, Some(2.5));
        assert_eq!(c.solver.rank, Some(8));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[solver]\nranks = 3\n").is_err());
    }

    #[test]
    fn inconsistent_settings_fail_validation() {
        let mut c = RunConfig::default();
        c.solver.mode = SolverMode::LowRank;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.prior.kind = PriorKind::H1_2D;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.solver.grid_mask = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lowrank_sparse_without_mask_is_a_config_error() {
        let mut c = RunConfig::default();
        c.solver.mode = SolverMode::LowRankSparse;
        c.solver.rank = Some(5);
        assert!(matches!(c.mask(100), Err(CliError::Config(_))));
    }
}
