//! Episode simulation and empirical Bayes regret.
//!
//! Random regret of one episode is the realized reward of the optimal arm
//! minus the realized reward of the pulled arms, summed over rounds; it can
//! be negative. Empirical Bayes regret averages it over instances drawn from
//! a prior. All randomness is keyed by label paths under a caller-provided
//! base stream: instance `j` uses children `("instance", j)`, `("rewards", j)`
//! and `("policy", j)`, so results are identical for any thread count.

use rayon::prelude::*;

use crate::env::{binarize_reward, sample_instance, InstancePrior, ProblemInstance};
use crate::error::{Error, Result};
use crate::policies::{needs_binary_rewards, PolicySpec, PolicyState};
use crate::rng::{ArmIndex, RandomStream};

/// A sequential decision rule driven by per-episode random streams.
pub trait Agent {
    fn select(&mut self, inst: &ProblemInstance, rng: &mut RandomStream) -> Result<ArmIndex>;

    /// Observes the pulled arm's reward. `rng` backs auxiliary randomization
    /// (reward binarization), never the environment.
    fn update(
        &mut self,
        inst: &ProblemInstance,
        arm: ArmIndex,
        reward: f64,
        rng: &mut RandomStream,
    ) -> Result<()>;
}

/// One of the six tunable policies, bound to an instance for one episode.
pub struct PolicyAgent {
    state: PolicyState,
    binarize: bool,
}

impl PolicyAgent {
    pub fn new(spec: &PolicySpec, inst: &ProblemInstance) -> Result<Self> {
        Ok(PolicyAgent {
            state: PolicyState::new(spec, inst)?,
            binarize: needs_binary_rewards(spec.kind),
        })
    }
}

impl Agent for PolicyAgent {
    fn select(&mut self, inst: &ProblemInstance, rng: &mut RandomStream) -> Result<ArmIndex> {
        self.state.select(inst, rng)
    }

    fn update(
        &mut self,
        inst: &ProblemInstance,
        arm: ArmIndex,
        reward: f64,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let reward = if self.binarize && reward != 0.0 && reward != 1.0 {
            binarize_reward(reward, rng)?
        } else {
            reward
        };
        self.state.update(inst, arm, reward)
    }
}

/// Runs one episode with explicit reward and policy streams.
///
/// Every round realizes all K rewards from `rewards` before the agent acts,
/// so the reward table is a pure function of the rewards stream and two
/// agents fed the same stream face identical tables.
pub fn run_episode_with<A: Agent>(
    agent: &mut A,
    inst: &ProblemInstance,
    n: usize,
    rewards: &mut RandomStream,
    policy: &mut RandomStream,
) -> Result<f64> {
    let star = inst.optimal_arm();
    let mut y = vec![0.0; inst.k];
    let mut regret = 0.0;
    for _ in 0..n {
        inst.realize_round_into(rewards, &mut y);
        let arm = agent.select(inst, policy)?;
        regret += y[star] - y[arm];
        agent.update(inst, arm, y[arm], policy)?;
    }
    Ok(regret)
}

/// Random regret of one policy episode under the given episode stream.
pub fn run_episode(
    spec: &PolicySpec,
    inst: &ProblemInstance,
    n: usize,
    episode: &RandomStream,
) -> Result<f64> {
    let mut agent = PolicyAgent::new(spec, inst)?;
    let mut rewards = episode.child("rewards", 0);
    let mut policy = episode.child("policy", 0);
    run_episode_with(&mut agent, inst, n, &mut rewards, &mut policy)
}

/// Sample mean, standard deviation and standard error of regret samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegretEstimate {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub count: usize,
}

impl RegretEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        assert!(count >= 1, "estimate needs at least one sample");
        let mean = samples.iter().sum::<f64>() / count as f64;
        let std = if count == 1 {
            0.0
        } else {
            let ss = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            (ss / (count - 1) as f64).sqrt()
        };
        RegretEstimate { mean, std, stderr: std / (count as f64).sqrt(), count }
    }
}

/// Per-instance random regrets for an agent family over `s` sampled instances.
///
/// `factory` builds a fresh agent for each instance. Instances are simulated
/// in parallel; the returned order is by instance index, so the output is a
/// pure function of `(base, prior, n, s)` and the factory.
pub fn regrets_with<A, F>(
    factory: F,
    prior: &InstancePrior,
    s: usize,
    n: usize,
    base: &RandomStream,
) -> Result<Vec<f64>>
where
    A: Agent,
    F: Fn(&ProblemInstance) -> Result<A> + Sync,
{
    prior.validate()?;
    if s == 0 {
        return Err(Error::InvalidParameter("sample count s must be at least 1".into()));
    }
    (0..s as u64)
        .into_par_iter()
        .map(|j| {
            let run = || -> Result<f64> {
                let mut irng = base.child("instance", j);
                let inst = sample_instance(prior, &mut irng);
                let mut agent = factory(&inst)?;
                let mut rewards = base.child("rewards", j);
                let mut policy = base.child("policy", j);
                run_episode_with(&mut agent, &inst, n, &mut rewards, &mut policy)
            };
            run().map_err(|e| Error::AtInstance { index: j as usize, source: Box::new(e) })
        })
        .collect()
}

/// Per-instance random regrets of one policy.
pub fn per_instance_regrets(
    spec: &PolicySpec,
    prior: &InstancePrior,
    s: usize,
    n: usize,
    base: &RandomStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    regrets_with(|inst| PolicyAgent::new(spec, inst), prior, s, n, base)
}

/// Empirical Bayes regret: mean random regret over `s` sampled instances.
pub fn empirical_bayes_regret(
    spec: &PolicySpec,
    prior: &InstancePrior,
    s: usize,
    n: usize,
    base: &RandomStream,
) -> Result<RegretEstimate> {
    Ok(RegretEstimate::from_samples(&per_instance_regrets(spec, prior, s, n, base)?))
}

/// Evaluates two specs on the same `s` instances, returning paired regrets.
///
/// With `common_rewards` both probes also see identical reward tables
/// (common random numbers); otherwise reward streams are probe-specific.
pub fn paired_regrets(
    spec_a: &PolicySpec,
    spec_b: &PolicySpec,
    prior: &InstancePrior,
    s: usize,
    n: usize,
    base: &RandomStream,
    common_rewards: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec_a.validate()?;
    spec_b.validate()?;
    prior.validate()?;
    if s == 0 {
        return Err(Error::InvalidParameter("sample count s must be at least 1".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..s as u64)
        .into_par_iter()
        .map(|j| {
            let mut irng = base.child("instance", j);
            let inst = sample_instance(prior, &mut irng);
            let run = |spec: &PolicySpec, probe: u64| -> Result<f64> {
                let mut agent = PolicyAgent::new(spec, &inst)?;
                let mut rewards = if common_rewards {
                    base.child("rewards", j)
                } else {
                    base.child("rewards", j).child("probe", probe)
                };
                let mut policy = base.child("policy", j).child("probe", probe);
                run_episode_with(&mut agent, &inst, n, &mut rewards, &mut policy)
            };
            run(spec_a, 0).and_then(|a| Ok((a, run(spec_b, 1)?))).map_err(|e| {
                Error::AtInstance { index: j as usize, source: Box::new(e) }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect()))
}

/// Empirical Bayes regret of one policy at each grid value of gamma.
///
/// Each grid point draws its own fresh instances (child `("sweep_point", i)`),
/// so points are statistically independent.
pub fn sweep_gamma(
    template: &PolicySpec,
    prior: &InstancePrior,
    grid: &[f64],
    s: usize,
    n: usize,
    base: &RandomStream,
) -> Result<Vec<(f64, RegretEstimate)>> {
    grid.iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let mut spec = *template;
            spec.gamma = gamma;
            let sub = base.child("sweep_point", i as u64);
            Ok((gamma, empirical_bayes_regret(&spec, prior, s, n, &sub)?))
        })
        .collect()
}
