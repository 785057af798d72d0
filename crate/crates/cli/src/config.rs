//! Experiment configuration files.
//!
//! A config is a TOML document with a handful of run-wide keys, a `[prior]`
//! section, a `[policy]` section, and exactly one mode section that selects
//! what the run computes. Unknown keys are hard errors so a config can be
//! trusted to describe the run that produced an output file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use banditune_core::env::{InstancePrior, TwoPointRewards};
use banditune_core::policies::{PolicyKind, PolicySpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for every stream in the run.
    pub seed: u64,
    /// Episode horizon.
    pub n: usize,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub threads: usize,
    /// Output path; required here unless --out is given.
    #[serde(default)]
    pub out: Option<String>,
    pub prior: PriorConfig,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tune_ternary: Option<TernaryConfig>,
    #[serde(default)]
    pub tune_uniform: Option<UniformConfig>,
    #[serde(default)]
    pub gittins_compare: Option<GittinsConfig>,
    #[serde(default)]
    pub validate: Option<ValidateConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sweep,
    TuneTernary,
    TuneUniform,
    GittinsCompare,
    Validate,
}

impl Mode {
    pub fn section(self) -> &'static str {
        match self {
            Mode::Sweep => "sweep",
            Mode::TuneTernary => "tune_ternary",
            Mode::TuneUniform => "tune_uniform",
            Mode::GittinsCompare => "gittins_compare",
            Mode::Validate => "validate",
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub family: PriorFamily,
    /// two_point: support means, picked with probability 1/2 each.
    #[serde(default)]
    pub mu_a: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_b: Option<Vec<f64>>,
    /// two_point: reward kind, "bernoulli" (default) or "beta".
    #[serde(default)]
    pub rewards: Option<String>,
    /// beta_rewards and two_point beta rewards: concentration v.
    #[serde(default)]
    pub v: Option<f64>,
    /// Arm count for the sampled families.
    #[serde(default)]
    pub k: Option<usize>,
    /// Feature dimension for linear/logistic.
    #[serde(default)]
    pub d: Option<usize>,
    /// Reward noise for linear.
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    TwoPoint,
    BetaMeans,
    BetaRewards,
    LinearUniform,
    LogisticUniform,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKindConfig,
    /// Ridge weight of the design matrix (linear and GLM UCB policies).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Reward noise scale entering confidence radii.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Minimum sigmoid slope entering the GLM UCB radius.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Ridge weight of the GLM likelihood.
    #[serde(default)]
    pub glm_ridge: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindConfig {
    Ucb1,
    BernTs,
    LinUcb,
    LinTs,
    UcbGlm,
    GlmTsl,
}

impl From<PolicyKindConfig> for PolicyKind {
    fn from(kind: PolicyKindConfig) -> PolicyKind {
        match kind {
            PolicyKindConfig::Ucb1 => PolicyKind::Ucb1,
            PolicyKindConfig::BernTs => PolicyKind::BernTs,
            PolicyKindConfig::LinUcb => PolicyKind::LinUcb,
            PolicyKindConfig::LinTs => PolicyKind::LinTs,
            PolicyKindConfig::UcbGlm => PolicyKind::UcbGlm,
            PolicyKindConfig::GlmTsl => PolicyKind::GlmTsl,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Evenly spaced grid step over [0, 1]; ignored when `grid` is given.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Explicit gamma grid, ascending.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Instances per grid point.
    pub s: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TernaryConfig {
    /// Total regret-computation budget split as s/(2L) per probe and step.
    pub s: usize,
    /// Elimination steps L for the budget schedule.
    #[serde(default)]
    pub steps: Option<usize>,
    /// "budget" (default) or "theory".
    #[serde(default)]
    pub schedule: Option<String>,
    /// Theory schedule parameters.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
    /// Fresh instances for the post-hoc evaluation of gamma_hat.
    #[serde(default = "default_posthoc")]
    pub posthoc_s: usize,
    /// Independent tune+evaluate repetitions.
    #[serde(default = "default_replications")]
    pub replications: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UniformConfig {
    /// Grid step of the evaluation grid {0, eps, ..., 1}.
    pub epsilon: f64,
    /// Total budget; floor(eps * s) instances per grid point.
    pub s: usize,
    #[serde(default = "default_posthoc")]
    pub posthoc_s: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GittinsConfig {
    /// Index-table bisection tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Table cache path; defaults to gittins_<n>.bin next to the output.
    #[serde(default)]
    pub cache: Option<String>,
    /// Evaluation instances per curve point and for the index policy.
    pub s: usize,
    /// Gamma grid step for the ucb1 and bern_ts sweep curves.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Reference minimizer b; computed by a fine sweep when omitted.
    #[serde(default)]
    pub gamma_star: Option<f64>,
    /// Left-branch probe points; defaults to 10 points below gamma_star.
    #[serde(default)]
    pub a_grid: Option<Vec<f64>>,
    /// Instances per evaluated gamma.
    pub s: usize,
    /// Instances per point of the gamma_star sweep (when computed).
    #[serde(default = "default_star_s")]
    pub star_s: usize,
}

fn default_posthoc() -> usize {
    1000
}

fn default_replications() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-4
}

fn default_grid_step() -> f64 {
    0.02
}

fn default_star_s() -> usize {
    2000
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        config
            .check()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    /// The mode implied by the one mode section present.
    pub fn mode(&self) -> Result<Mode> {
        let mut found = Vec::new();
        if self.sweep.is_some() {
            found.push(Mode::Sweep);
        }
        if self.tune_ternary.is_some() {
            found.push(Mode::TuneTernary);
        }
        if self.tune_uniform.is_some() {
            found.push(Mode::TuneUniform);
        }
        if self.gittins_compare.is_some() {
            found.push(Mode::GittinsCompare);
        }
        if self.validate.is_some() {
            found.push(Mode::Validate);
        }
        match found.as_slice() {
            [mode] => Ok(*mode),
            [] => bail!(
                "config needs exactly one mode section: [sweep], [tune_ternary], \
                 [tune_uniform], [gittins_compare], or [validate]"
            ),
            many => bail!(
                "config has {} mode sections ({}); exactly one is allowed",
                many.len(),
                many.iter().map(|m| m.section()).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            bail!("field n: horizon must be at least 1");
        }
        self.mode()?;
        self.instance_prior()?;
        self.policy_spec(1.0)?.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.grid_step.is_none() && sweep.grid.is_none() {
                bail!("section sweep: either grid_step or grid is required");
            }
            if sweep.s == 0 {
                bail!("field sweep.s: at least one instance per point is required");
            }
            for &g in sweep.grid.iter().flatten() {
                if !(0.0..=1.0).contains(&g) {
                    bail!("field sweep.grid: gamma {g} outside [0, 1]");
                }
            }
            if let Some(step) = sweep.grid_step {
                if !(step > 0.0 && step <= 1.0) {
                    bail!("field sweep.grid_step: step {step} outside (0, 1]");
                }
            }
        }
        if let Some(tern) = &self.tune_ternary {
            match tern.schedule.as_deref().unwrap_or("budget") {
                "budget" => {
                    if tern.steps.is_none() {
                        bail!("field tune_ternary.steps: required for the budget schedule");
                    }
                }
                "theory" => {
                    if tern.epsilon.is_none() || tern.delta.is_none() || tern.m.is_none() {
                        bail!(
                            "section tune_ternary: theory schedule needs epsilon, delta, and m"
                        );
                    }
                }
                other => bail!(
                    "field tune_ternary.schedule: {other:?} is not \"budget\" or \"theory\""
                ),
            }
            if tern.replications == 0 || tern.posthoc_s == 0 {
                bail!("section tune_ternary: replications and posthoc_s must be positive");
            }
        }
        if let Some(uni) = &self.tune_uniform {
            if uni.replications == 0 || uni.posthoc_s == 0 {
                bail!("section tune_uniform: replications and posthoc_s must be positive");
            }
        }
        if let Some(git) = &self.gittins_compare {
            if git.s == 0 {
                bail!("field gittins_compare.s: at least one instance is required");
            }
            if self.prior.family != PriorFamily::TwoPoint {
                bail!("section gittins_compare: requires the two_point prior");
            }
            let kind = PolicyKind::from(self.policy.kind);
            if kind != PolicyKind::Ucb1 && kind != PolicyKind::BernTs {
                bail!("section gittins_compare: policy must be ucb1 or bern_ts");
            }
        }
        if let Some(val) = &self.validate {
            if val.s == 0 {
                bail!("field validate.s: at least one instance is required");
            }
            if let (Some(star), Some(grid)) = (val.gamma_star, &val.a_grid) {
                for &a in grid {
                    if !(a < star) {
                        bail!(
                            "field validate.a_grid: point {a} is not below gamma_star {star}"
                        );
                    }
                }
            }
        }
        Ok(())
    }

    pub fn instance_prior(&self) -> Result<InstancePrior> {
        let p = &self.prior;
        let need = |opt: Option<usize>, field: &str| {
            opt.with_context(|| format!("field prior.{field}: required for {:?}", p.family))
        };
        let forbid_linear = || -> Result<()> {
            if p.d.is_some() || p.sigma.is_some() {
                bail!("fields prior.d / prior.sigma: only valid for linear or logistic priors");
            }
            Ok(())
        };
        let prior = match p.family {
            PriorFamily::TwoPoint => {
                forbid_linear()?;
                if p.k.is_some() {
                    bail!("field prior.k: two_point arm count comes from mu_a / mu_b");
                }
                let mu_a = p.mu_a.clone().context("field prior.mu_a: required for two_point")?;
                let mu_b = p.mu_b.clone().context("field prior.mu_b: required for two_point")?;
                let rewards = match p.rewards.as_deref().unwrap_or("bernoulli") {
                    "bernoulli" => {
                        if p.v.is_some() {
                            bail!("field prior.v: only valid with beta rewards");
                        }
                        TwoPointRewards::Bernoulli
                    }
                    "beta" => TwoPointRewards::Beta {
                        v: p.v.context("field prior.v: required for beta rewards")?,
                    },
                    other => bail!(
                        "field prior.rewards: {other:?} is not \"bernoulli\" or \"beta\""
                    ),
                };
                InstancePrior::TwoPoint { mu_a, mu_b, rewards }
            }
            PriorFamily::BetaMeans => {
                forbid_linear()?;
                self.forbid_two_point()?;
                if p.v.is_some() {
                    bail!("field prior.v: only valid for beta_rewards");
                }
                InstancePrior::BetaMeans { k: need(p.k, "k")? }
            }
            PriorFamily::BetaRewards => {
                forbid_linear()?;
                self.forbid_two_point()?;
                InstancePrior::BetaRewards {
                    k: need(p.k, "k")?,
                    v: p.v.context("field prior.v: required for beta_rewards")?,
                }
            }
            PriorFamily::LinearUniform => {
                self.forbid_two_point()?;
                InstancePrior::LinearUniform {
                    k: need(p.k, "k")?,
                    d: need(p.d, "d")?,
                    sigma: p.sigma.context("field prior.sigma: required for linear_uniform")?,
                }
            }
            PriorFamily::LogisticUniform => {
                self.forbid_two_point()?;
                if p.sigma.is_some() {
                    bail!("field prior.sigma: only valid for linear_uniform");
                }
                InstancePrior::LogisticUniform { k: need(p.k, "k")?, d: need(p.d, "d")? }
            }
        };
        prior.validate()?;
        Ok(prior)
    }

    fn forbid_two_point(&self) -> Result<()> {
        let p = &self.prior;
        if p.mu_a.is_some() || p.mu_b.is_some() || p.rewards.is_some() {
            bail!(
                "fields prior.mu_a / prior.mu_b / prior.rewards: only valid for two_point"
            );
        }
        Ok(())
    }

    /// Policy spec at the given gamma, with config overrides applied.
    pub fn policy_spec(&self, gamma: f64) -> Result<PolicySpec> {
        let mut spec = PolicySpec::new(self.policy.kind.into(), gamma, self.n);
        if let Some(lambda) = self.policy.lambda {
            spec.lambda = lambda;
        }
        if let Some(sigma) = self.policy.sigma {
            spec.sigma = sigma;
        }
        if let Some(kappa) = self.policy.kappa {
            spec.kappa = kappa;
        }
        if let Some(ridge) = self.policy.glm_ridge {
            spec.glm_ridge = ridge;
        }
        Ok(spec)
    }

    /// The gamma grid of the sweep section.
    pub fn sweep_grid(&self) -> Result<Vec<f64>> {
        let sweep = self.sweep.as_ref().context("missing [sweep] section")?;
        if let Some(grid) = &sweep.grid {
            return Ok(grid.clone());
        }
        Ok(step_grid(sweep.grid_step.expect("checked at load")))
    }
}

/// Evenly spaced grid {0, step, 2 step, ..., 1}; the last point snaps to 1.
pub fn step_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (*last - 1.0).abs() < 1e-9 {
            *last = 1.0;
        } else if *last < 1.0 {
            grid.push(1.0);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep_text() -> &'static str {
        r#"
            seed = 3
            n = 1000
            [prior]
            family = "two_point"
            mu_a = [0.55, 0.45]
            mu_b = [0.45, 0.55]
            [policy]
            kind = "ucb1"
            [sweep]
            grid_step = 0.5
            s = 10
        "#
    }

    #[test]
    fn parses_minimal_sweep() {
        let config: ExperimentConfig = toml::from_str(sweep_text()).unwrap();
        config.check().unwrap();
        assert_eq!(config.mode().unwrap(), Mode::Sweep);
        assert_eq!(config.sweep_grid().unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(matches!(
            config.instance_prior().unwrap(),
            InstancePrior::TwoPoint { .. }
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = sweep_text().replace("seed = 3", "seed = 3\nbudget = 7");
        let err = toml::from_str::<ExperimentConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("budget"), "{err}");
    }

    #[test]
    fn two_mode_sections_rejected() {
        let text = format!(
            "{}\n[validate]\ns = 5\ngamma_star = 0.4\n",
            sweep_text()
        );
        let config: ExperimentConfig = toml::from_str(&text).unwrap();
        let err = config.check().unwrap_err();
        assert!(err.to_string().contains("mode sections"), "{err}");
    }

    #[test]
    fn family_field_mismatch_is_named() {
        let text = sweep_text().replace("mu_a = [0.55, 0.45]", "mu_a = [0.55, 0.45]\nsigma = 0.5");
        let config: ExperimentConfig = toml::from_str(&text).unwrap();
        let err = config.check().unwrap_err();
        assert!(err.to_string().contains("prior.sigma"), "{err}");
    }

    #[test]
    fn theory_schedule_needs_parameters() {
        let text = r#"
            seed = 1
            n = 100
            [prior]
            family = "beta_means"
            k = 3
            [policy]
            kind = "bern_ts"
            [tune_ternary]
            s = 100
            schedule = "theory"
            epsilon = 0.1
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let err = config.check().unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
    }

    #[test]
    fn step_grid_snaps_endpoint() {
        assert_eq!(step_grid(0.5), vec![0.0, 0.5, 1.0]);
        let fifty_one = step_grid(0.02);
        assert_eq!(fifty_one.len(), 51);
        assert_eq!(*fifty_one.last().unwrap(), 1.0);
        let uneven = step_grid(0.3);
        assert_eq!(uneven, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn shipped_configs_all_load() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        let mut dirs = vec![root];
        while let Some(dir) = dirs.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    dirs.push(path);
                } else if path.extension().is_some_and(|e| e == "toml") {
                    ExperimentConfig::load(&path)
                        .unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
                    seen += 1;
                }
            }
        }
        assert_eq!(seen, 80, "shipped config count changed");
    }

    #[test]
    fn gittins_mode_requires_two_point_and_tabular_policy() {
        let text = r#"
            seed = 1
            n = 20
            [prior]
            family = "beta_means"
            k = 2
            [policy]
            kind = "ucb1"
            [gittins_compare]
            s = 10
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let err = config.check().unwrap_err();
        assert!(err.to_string().contains("two_point"), "{err}");
    }
}
