//! Tuning the width multiplier by noisy ternary search or grid search.
//!
//! Ternary search maintains an interval [I, J] over gamma, probes the two
//! interior third points a = (2I+J)/3 and b = (I+2J)/3 with fresh regret
//! estimates, and discards the third of the interval behind the worse probe.
//! Each step shrinks the interval by a factor 2/3; both probes of a step are
//! averaged over the same sampled instances.

use crate::env::InstancePrior;
use crate::error::{Error, Result};
use crate::evaluator::{paired_regrets, sweep_gamma, RegretEstimate};
use crate::policies::PolicySpec;
use crate::rng::RandomStream;

/// Thompson-family evaluation floor: probes are run at max(gamma, 0.02).
pub const TS_GAMMA_FLOOR: f64 = 0.02;

/// The gamma actually evaluated for a policy: posterior-width policies
/// degenerate toward greedy below [`TS_GAMMA_FLOOR`], so probes, grids, and
/// tuned picks are all floored there before an episode runs.
pub fn ts_clip(kind: crate::policies::PolicyKind, gamma: f64) -> f64 {
    if kind.is_posterior_width() {
        gamma.max(TS_GAMMA_FLOOR)
    } else {
        gamma
    }
}

/// Per-step probe sample sizes; one ternary step consumes two probes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub sizes: Vec<usize>,
}

impl Schedule {
    /// Number of ternary steps L.
    pub fn depth(&self) -> usize {
        self.sizes.len()
    }

    /// Regret computations consumed by a full run: two probes per step.
    pub fn total_samples(&self) -> usize {
        2 * self.sizes.iter().sum::<usize>()
    }
}

/// PAC schedule: enough steps for final accuracy `eps`, sample sizes that
/// keep every elimination correct with probability `1 - delta` overall.
///
/// L = ceil(log(1/(2 eps)) / log(3/2)) and
/// s_l = ceil(72 (3/2)^{2l} / m^2 * (log(1/delta) + log(4L))), where `m`
/// lower-bounds the slope of the regret curve away from its minimizer.
pub fn theory_schedule(eps: f64, delta: f64, m: f64) -> Result<Schedule> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "accuracy eps must lie in (0, 0.5), got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "failure level delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("slope bound m must be positive, got {m}")));
    }
    let l = ((1.0 / (2.0 * eps)).ln() / 1.5f64.ln()).ceil() as usize;
    let log_term = (1.0 / delta).ln() + (4.0 * l as f64).ln();
    let sizes = (1..=l)
        .map(|step| {
            let raw = 72.0 * 1.5f64.powi(2 * step as i32) / (m * m) * log_term;
            if raw > 1e15 {
                return Err(Error::InvalidParameter(format!(
                    "schedule size {raw:.3e} at step {step} is unreasonably large"
                )));
            }
            Ok(raw.ceil() as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Schedule { sizes })
}

/// Splits a fixed budget of `s` regret computations evenly over `l` steps:
/// each of the 2l probes gets floor(s / 2l) instances.
pub fn budget_schedule(s: usize, l: usize) -> Result<Schedule> {
    if l == 0 {
        return Err(Error::InvalidParameter("step count L must be at least 1".into()));
    }
    if s < 2 * l {
        return Err(Error::BudgetTooSmall { s, min: 2 * l });
    }
    Ok(Schedule { sizes: vec![s / (2 * l); l] })
}

/// Supplies paired regret estimates for the two probe points of one step.
pub trait RegretOracle {
    /// Estimates regret at `gamma_a` and `gamma_b`, each averaged over
    /// `samples` draws; the two estimates share the underlying samples
    /// whenever the oracle supports it.
    fn probe_pair(
        &mut self,
        step: usize,
        gamma_a: f64,
        gamma_b: f64,
        samples: usize,
    ) -> Result<(f64, f64)>;
}

/// Empirical-Bayes-regret oracle over a policy family and prior.
///
/// Probe gammas of Thompson-family policies are clipped to
/// [`TS_GAMMA_FLOOR`]; interval arithmetic in the search is never clipped.
pub struct PolicyEbrOracle<'a> {
    pub template: PolicySpec,
    pub prior: &'a InstancePrior,
    pub n: usize,
    pub base: RandomStream,
    /// Share reward tables between the two probes of a step (common random
    /// numbers) on top of the always-on instance pairing.
    pub common_rewards: bool,
}

impl PolicyEbrOracle<'_> {
    fn eval_gamma(&self, gamma: f64) -> f64 {
        ts_clip(self.template.kind, gamma)
    }
}

impl RegretOracle for PolicyEbrOracle<'_> {
    fn probe_pair(
        &mut self,
        step: usize,
        gamma_a: f64,
        gamma_b: f64,
        samples: usize,
    ) -> Result<(f64, f64)> {
        let mut spec_a = self.template;
        spec_a.gamma = self.eval_gamma(gamma_a);
        let mut spec_b = self.template;
        spec_b.gamma = self.eval_gamma(gamma_b);
        let sub = self.base.child("tune_step", step as u64);
        let (a, b) = paired_regrets(
            &spec_a,
            &spec_b,
            self.prior,
            samples,
            self.n,
            &sub,
            self.common_rewards,
        )?;
        Ok((RegretEstimate::from_samples(&a).mean, RegretEstimate::from_samples(&b).mean))
    }
}

/// One ternary elimination step, as recorded in the trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunerStep {
    /// Interval before the step.
    pub low: f64,
    pub high: f64,
    /// Probe points a < b.
    pub probe_low: f64,
    pub probe_high: f64,
    /// Regret estimates at the probes.
    pub regret_low: f64,
    pub regret_high: f64,
    /// True when the lower third was discarded (estimate at a >= estimate at b).
    pub keep_upper: bool,
    /// Instances per probe.
    pub samples: usize,
}

/// Full record of one ternary search run.
#[derive(Clone, Debug, PartialEq)]
pub struct TunerTrace {
    pub steps: Vec<TunerStep>,
    /// Final interval.
    pub low: f64,
    pub high: f64,
    /// Midpoint of the final interval.
    pub gamma_hat: f64,
    /// Regret computations consumed (two probes per step).
    pub total_samples: usize,
}

/// Noisy ternary search for the regret-minimizing gamma on [0, 1].
pub fn ternary_ebrm<O: RegretOracle>(oracle: &mut O, schedule: &Schedule) -> Result<TunerTrace> {
    if schedule.sizes.is_empty() {
        return Err(Error::InvalidParameter("schedule must have at least one step".into()));
    }
    if schedule.sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameter("schedule sizes must be positive".into()));
    }
    let mut low = 0.0f64;
    let mut high = 1.0f64;
    let mut steps = Vec::with_capacity(schedule.depth());
    let mut total = 0usize;
    for (step, &samples) in schedule.sizes.iter().enumerate() {
        let a = (2.0 * low + high) / 3.0;
        let b = (low + 2.0 * high) / 3.0;
        let (regret_a, regret_b) = oracle.probe_pair(step, a, b, samples)?;
        total += 2 * samples;
        let keep_upper = regret_a >= regret_b;
        steps.push(TunerStep {
            low,
            high,
            probe_low: a,
            probe_high: b,
            regret_low: regret_a,
            regret_high: regret_b,
            keep_upper,
            samples,
        });
        if keep_upper {
            low = a;
        } else {
            high = b;
        }
    }
    Ok(TunerTrace { steps, low, high, gamma_hat: 0.5 * (low + high), total_samples: total })
}

/// Ternary search over one policy family and prior.
pub fn tune_ternary(
    template: &PolicySpec,
    prior: &InstancePrior,
    n: usize,
    schedule: &Schedule,
    base: &RandomStream,
    common_rewards: bool,
) -> Result<TunerTrace> {
    let mut oracle = PolicyEbrOracle {
        template: *template,
        prior,
        n,
        base: base.clone(),
        common_rewards,
    };
    ternary_ebrm(&mut oracle, schedule)
}

/// Evaluation grid {0, eps, 2 eps, ..., 1} for the uniform baseline.
pub fn uniform_grid(eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid spacing eps must lie in (0, 1], got {eps}"
        )));
    }
    let steps = (1.0 / eps + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|i| {
            let g = i as f64 * eps;
            if (g - 1.0).abs() < 1e-9 {
                1.0
            } else {
                g
            }
        })
        .collect())
}

/// Smallest-gamma minimizer of (gamma, regret) pairs.
fn argmin_smallest_gamma(points: &[(f64, RegretEstimate)]) -> f64 {
    let mut best = points[0];
    for &p in &points[1..] {
        if p.1.mean < best.1.mean {
            best = p;
        }
    }
    best.0
}

/// Result of the uniform grid baseline.
#[derive(Clone, Debug)]
pub struct UniformTuneResult {
    pub gamma_hat: f64,
    pub points: Vec<(f64, RegretEstimate)>,
    /// Regret computations consumed: floor(eps * s) per grid point.
    pub total_samples: usize,
}

/// Uniform baseline: estimate regret at every grid point with floor(eps * s)
/// fresh instances each and return the empirical minimizer (ties go to the
/// smaller gamma). Thompson-family grids replace points below the floor by
/// [`TS_GAMMA_FLOOR`].
pub fn uniform_tune(
    template: &PolicySpec,
    prior: &InstancePrior,
    n: usize,
    eps: f64,
    s: usize,
    base: &RandomStream,
) -> Result<UniformTuneResult> {
    let per_point = (eps * s as f64).floor() as usize;
    if per_point == 0 {
        return Err(Error::GridBudgetTooSmall);
    }
    let mut grid = uniform_grid(eps)?;
    if template.kind.is_posterior_width() {
        for g in &mut grid {
            *g = g.max(TS_GAMMA_FLOOR);
        }
    }
    let points = sweep_gamma(template, prior, &grid, per_point, n, base)?;
    Ok(UniformTuneResult {
        gamma_hat: argmin_smallest_gamma(&points),
        total_samples: grid.len() * per_point,
        points,
    })
}
