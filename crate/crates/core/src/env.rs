//! Problem instances and the priors that generate them.
//!
//! An instance fixes a reward-generating environment with `K` arms; a prior
//! is a distribution over instances. Five families cover all experiments:
//! two-point mixtures, Bernoulli with uniform means, beta rewards with
//! uniform means, and linear/logistic models with box-uniform parameters.

use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::numerics::sigmoid;
use crate::rng::{argmax_tiebreak, ArmIndex, RandomStream};

/// Reward model of one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InstanceKind {
    Bernoulli,
    /// Rewards `Beta(v*mu, v*(1-mu))`; mean `mu`, spread controlled by `v`.
    Beta { v: f64 },
    /// Rewards `x_i' theta* + N(0, sigma^2)` noise; may leave `[0, 1]`.
    Linear { sigma: f64 },
    /// Rewards `Ber(sigmoid(x_i' theta*))`.
    Logistic,
}

/// Per-arm beta sampler, precomputed once per instance.
#[derive(Clone, Debug)]
enum BetaArm {
    /// `mu` of 0 or 1 makes the Beta degenerate; the mean is returned as is.
    Degenerate(f64),
    Dist(rand_distr::Beta<f64>),
}

/// A sampled environment; immutable once constructed.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub kind: InstanceKind,
    pub k: usize,
    /// Mean reward per arm. For linear instances this is `x_i' theta*` and
    /// may fall outside `[0, 1]`; regret is defined on raw rewards.
    pub mu: Vec<f64>,
    /// Arm features, row-major `K x d`; empty unless linear/logistic.
    pub features: Vec<f64>,
    pub d: usize,
    pub theta_star: Vec<f64>,
    optimal: ArmIndex,
    beta_arms: Vec<BetaArm>,
}

impl ProblemInstance {
    fn finish(
        kind: InstanceKind,
        mu: Vec<f64>,
        features: Vec<f64>,
        d: usize,
        theta_star: Vec<f64>,
        rng: &mut RandomStream,
    ) -> Self {
        let k = mu.len();
        assert!(k >= 1, "instance needs at least one arm");
        if let InstanceKind::Bernoulli | InstanceKind::Beta { .. } = kind {
            assert!(
                mu.iter().all(|&m| (0.0..=1.0).contains(&m)),
                "bernoulli/beta means must lie in [0, 1]"
            );
        }
        let beta_arms = match kind {
            InstanceKind::Beta { v } => {
                assert!(v > 0.0, "beta spread v must be positive");
                mu.iter()
                    .map(|&m| {
                        if m == 0.0 || m == 1.0 {
                            BetaArm::Degenerate(m)
                        } else {
                            BetaArm::Dist(
                                rand_distr::Beta::new(v * m, v * (1.0 - m))
                                    .expect("valid beta parameters"),
                            )
                        }
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        // Tie among optimal arms is broken once here, not per round.
        let optimal = argmax_tiebreak(&mu, rng).expect("means are finite");
        ProblemInstance { kind, k, mu, features, d, theta_star, optimal, beta_arms }
    }

    pub fn bernoulli(mu: Vec<f64>, rng: &mut RandomStream) -> Self {
        Self::finish(InstanceKind::Bernoulli, mu, Vec::new(), 0, Vec::new(), rng)
    }

    pub fn beta(mu: Vec<f64>, v: f64, rng: &mut RandomStream) -> Self {
        Self::finish(InstanceKind::Beta { v }, mu, Vec::new(), 0, Vec::new(), rng)
    }

    /// `features` is row-major `K x d`.
    pub fn linear(
        features: Vec<f64>,
        d: usize,
        theta_star: Vec<f64>,
        sigma: f64,
        rng: &mut RandomStream,
    ) -> Self {
        assert!(sigma >= 0.0, "noise sigma must be nonnegative");
        let mu = dot_rows(&features, d, &theta_star);
        Self::finish(InstanceKind::Linear { sigma }, mu, features, d, theta_star, rng)
    }

    pub fn logistic(
        features: Vec<f64>,
        d: usize,
        theta_star: Vec<f64>,
        rng: &mut RandomStream,
    ) -> Self {
        let mu: Vec<f64> =
            dot_rows(&features, d, &theta_star).into_iter().map(sigmoid).collect();
        Self::finish(InstanceKind::Logistic, mu, features, d, theta_star, rng)
    }

    /// The optimal arm, cached at construction.
    #[inline]
    pub fn optimal_arm(&self) -> ArmIndex {
        self.optimal
    }

    /// Feature row of one arm; panics unless the instance is structured.
    #[inline]
    pub fn arm_feature(&self, i: ArmIndex) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Draws the full reward K-tuple for one round into `out`.
    ///
    /// All K components are generated every round; the evaluator needs the
    /// optimal arm's realized reward even when another arm is pulled.
    pub fn realize_round_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        assert_eq!(out.len(), self.k);
        match self.kind {
            InstanceKind::Bernoulli | InstanceKind::Logistic => {
                for (y, &m) in out.iter_mut().zip(&self.mu) {
                    *y = f64::from(u8::from(rng.bernoulli(m)));
                }
            }
            InstanceKind::Beta { .. } => {
                for (y, arm) in out.iter_mut().zip(&self.beta_arms) {
                    *y = match arm {
                        BetaArm::Degenerate(m) => *m,
                        BetaArm::Dist(d) => d.sample(rng),
                    };
                }
            }
            InstanceKind::Linear { sigma } => {
                for (y, &m) in out.iter_mut().zip(&self.mu) {
                    *y = m + sigma * rng.normal();
                }
            }
        }
    }

    pub fn realize_round(&self, rng: &mut RandomStream) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.realize_round_into(rng, &mut out);
        out
    }
}

fn dot_rows(features: &[f64], d: usize, theta: &[f64]) -> Vec<f64> {
    assert!(d >= 1 && theta.len() == d && features.len() % d == 0);
    features.chunks_exact(d).map(|x| dot(x, theta)).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Converts a `[0, 1]` reward to a pseudo-reward in `{0, 1}` with the same mean.
pub fn binarize_reward(y: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::RewardOutOfRange(y));
    }
    Ok(f64::from(u8::from(rng.next_f64() < y)))
}

/// Two-point mixture reward model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TwoPointRewards {
    Bernoulli,
    Beta { v: f64 },
}

/// A distribution over problem instances.
#[derive(Clone, Debug)]
pub enum InstancePrior {
    /// Mean vector is `mu_a` or `mu_b`, each with probability 1/2.
    TwoPoint { mu_a: Vec<f64>, mu_b: Vec<f64>, rewards: TwoPointRewards },
    /// Bernoulli arms with means i.i.d. Beta(1,1).
    BetaMeans { k: usize },
    /// Beta(v mu, v(1-mu)) rewards with means i.i.d. Beta(1,1).
    BetaRewards { k: usize, v: f64 },
    /// Linear model; theta* and each feature row uniform on `[-1, 1]^d`.
    LinearUniform { k: usize, d: usize, sigma: f64 },
    /// Logistic model over the same box-uniform design.
    LogisticUniform { k: usize, d: usize },
}

impl InstancePrior {
    /// Two-armed Bernoulli mixture of `(0.55, 0.45)` and `(0.45, 0.55)`.
    pub fn warm_up() -> Self {
        InstancePrior::TwoPoint {
            mu_a: vec![0.55, 0.45],
            mu_b: vec![0.45, 0.55],
            rewards: TwoPointRewards::Bernoulli,
        }
    }

    pub fn arm_count(&self) -> usize {
        match self {
            InstancePrior::TwoPoint { mu_a, .. } => mu_a.len(),
            InstancePrior::BetaMeans { k }
            | InstancePrior::BetaRewards { k, .. }
            | InstancePrior::LinearUniform { k, .. }
            | InstancePrior::LogisticUniform { k, .. } => *k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            InstancePrior::TwoPoint { mu_a, mu_b, rewards } => {
                if mu_a.is_empty() || mu_a.len() != mu_b.len() {
                    return fail("two-point mean vectors must be non-empty and same length".into());
                }
                if mu_a.iter().chain(mu_b).any(|m| !(0.0..=1.0).contains(m)) {
                    return fail("two-point means must lie in [0, 1]".into());
                }
                if let TwoPointRewards::Beta { v } = rewards {
                    if !(*v > 0.0) {
                        return fail(format!("beta spread v must be positive, got {v}"));
                    }
                }
            }
            InstancePrior::BetaMeans { k } => {
                if *k < 1 {
                    return fail("arm count K must be at least 1".into());
                }
            }
            InstancePrior::BetaRewards { k, v } => {
                if *k < 1 {
                    return fail("arm count K must be at least 1".into());
                }
                if !(*v > 0.0) {
                    return fail(format!("beta spread v must be positive, got {v}"));
                }
            }
            InstancePrior::LinearUniform { k, d, sigma } => {
                if *k < 1 || *d < 1 {
                    return fail("K and d must be at least 1".into());
                }
                if !(*sigma >= 0.0) {
                    return fail(format!("noise sigma must be nonnegative, got {sigma}"));
                }
            }
            InstancePrior::LogisticUniform { k, d } => {
                if *k < 1 || *d < 1 {
                    return fail("K and d must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Draws one instance from the prior.
pub fn sample_instance(prior: &InstancePrior, rng: &mut RandomStream) -> ProblemInstance {
    prior.validate().expect("prior must be valid");
    match prior {
        InstancePrior::TwoPoint { mu_a, mu_b, rewards } => {
            let mu = if rng.bernoulli(0.5) { mu_a.clone() } else { mu_b.clone() };
            match rewards {
                TwoPointRewards::Bernoulli => ProblemInstance::bernoulli(mu, rng),
                TwoPointRewards::Beta { v } => ProblemInstance::beta(mu, *v, rng),
            }
        }
        InstancePrior::BetaMeans { k } => {
            // Beta(1, 1) is the uniform distribution on [0, 1].
            let mu = (0..*k).map(|_| rng.next_f64()).collect();
            ProblemInstance::bernoulli(mu, rng)
        }
        InstancePrior::BetaRewards { k, v } => {
            let mu = (0..*k).map(|_| rng.next_f64()).collect();
            ProblemInstance::beta(mu, *v, rng)
        }
        InstancePrior::LinearUniform { k, d, sigma } => {
            let theta = sample_box(*d, rng);
            let features = sample_box(k * d, rng);
            ProblemInstance::linear(features, *d, theta, *sigma, rng)
        }
        InstancePrior::LogisticUniform { k, d } => {
            let theta = sample_box(*d, rng);
            let features = sample_box(k * d, rng);
            ProblemInstance::logistic(features, *d, theta, rng)
        }
    }
}

fn sample_box(len: usize, rng: &mut RandomStream) -> Vec<f64> {
    (0..len).map(|_| 2.0 * rng.next_f64() - 1.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Seed};

    fn stream(label: &str) -> RandomStream {
        derive_stream(Seed(42), &[(label, 0)])
    }

    #[test]
    fn two_point_frequencies() {
        let prior = InstancePrior::warm_up();
        let mut hits = 0;
        for j in 0..2000 {
            let mut rng = derive_stream(Seed(5), &[("instance", j)]);
            let inst = sample_instance(&prior, &mut rng);
            assert!(inst.mu == vec![0.55, 0.45] || inst.mu == vec![0.45, 0.55]);
            if inst.mu[0] == 0.55 {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / 2000.0;
        assert!((freq - 0.5).abs() < 0.03, "freq {freq}");
    }

    #[test]
    fn beta_means_pooled_mean() {
        let prior = InstancePrior::BetaMeans { k: 10 };
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..10_000 {
            let mut rng = derive_stream(Seed(6), &[("instance", j)]);
            let inst = sample_instance(&prior, &mut rng);
            assert!(inst.mu.iter().all(|m| (0.0..=1.0).contains(m)));
            sum += inst.mu.iter().sum::<f64>();
            count += inst.k;
        }
        let mean = sum / count as f64;
        assert!((mean - 0.5).abs() < 0.01, "pooled mean {mean}");
    }

    #[test]
    fn linear_box_support() {
        let prior = InstancePrior::LinearUniform { k: 100, d: 10, sigma: 0.5 };
        let mut rng = stream("lin");
        let inst = sample_instance(&prior, &mut rng);
        assert_eq!(inst.features.len(), 100 * 10);
        assert_eq!(inst.theta_star.len(), 10);
        assert!(inst.features.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert!(inst.theta_star.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn degenerate_bernoulli_rounds() {
        let mut rng = stream("deg");
        let inst = ProblemInstance::bernoulli(vec![1.0, 0.0], &mut rng);
        for _ in 0..100 {
            assert_eq!(inst.realize_round(&mut rng), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn beta_reward_moments() {
        let mut rng = stream("betamom");
        let inst = ProblemInstance::beta(vec![0.5], 4.0, &mut rng);
        let n = 100_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        let mut out = [0.0];
        for _ in 0..n {
            inst.realize_round_into(&mut rng, &mut out);
            sum += out[0];
            sumsq += out[0] * out[0];
        }
        let mean = sum / f64::from(n);
        let var = sumsq / f64::from(n) - mean * mean;
        // Beta(2, 2): mean 1/2, variance 1/20.
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((var - 0.05).abs() < 0.005, "var {var}");
    }

    #[test]
    fn linear_zero_noise_is_exact() {
        let mut rng = stream("lin0");
        let inst =
            ProblemInstance::linear(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0.3, -0.2], 0.0, &mut rng);
        assert_eq!(inst.realize_round(&mut rng), vec![0.3, -0.2]);
    }

    #[test]
    fn optimal_arm_two_point() {
        let mut rng = stream("opt");
        assert_eq!(ProblemInstance::bernoulli(vec![0.55, 0.45], &mut rng).optimal_arm(), 0);
        assert_eq!(ProblemInstance::bernoulli(vec![0.45, 0.55], &mut rng).optimal_arm(), 1);
    }

    #[test]
    fn optimal_arm_tie_frequencies() {
        let mut counts = [0usize; 3];
        for j in 0..3000 {
            let mut rng = derive_stream(Seed(8), &[("instance", j)]);
            let inst = ProblemInstance::bernoulli(vec![0.3, 0.3, 0.3], &mut rng);
            counts[inst.optimal_arm()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 3000.0;
            assert!((freq - 1.0 / 3.0).abs() < 0.05, "freq {freq}");
        }
    }

    #[test]
    fn binarize_edges_and_mean() {
        let mut rng = stream("bin");
        assert_eq!(binarize_reward(0.0, &mut rng).unwrap(), 0.0);
        assert_eq!(binarize_reward(1.0, &mut rng).unwrap(), 1.0);
        assert!(binarize_reward(-0.1, &mut rng).is_err());
        assert!(binarize_reward(1.1, &mut rng).is_err());
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += binarize_reward(0.3, &mut rng).unwrap();
        }
        assert!((sum / f64::from(n) - 0.3).abs() < 0.005);
    }

    #[test]
    fn realized_means_match_mu_per_family() {
        let n = 100_000;
        let mut rng = stream("mc");
        let cases: Vec<(ProblemInstance, f64)> = vec![
            // (instance, per-draw std of arm 0)
            (ProblemInstance::bernoulli(vec![0.3, 0.7], &mut rng), (0.3f64 * 0.7).sqrt()),
            // Beta(1.2, 2.8): var = ab / ((a+b)^2 (a+b+1)) = 0.042
            (ProblemInstance::beta(vec![0.3, 0.6], 4.0, &mut rng), 0.042f64.sqrt()),
            (
                ProblemInstance::linear(vec![0.5, 0.5, -0.5, 0.25], 2, vec![0.8, 0.1], 0.5, &mut rng),
                0.5,
            ),
            (
                ProblemInstance::logistic(vec![0.5, 0.5, -0.5, 0.25], 2, vec![0.8, 0.1], &mut rng),
                {
                    let m = sigmoid(0.5 * 0.8 + 0.5 * 0.1);
                    (m * (1.0 - m)).sqrt()
                },
            ),
        ];
        for (inst, sd) in cases {
            let mut out = vec![0.0; inst.k];
            let mut sum = 0.0;
            for _ in 0..n {
                inst.realize_round_into(&mut rng, &mut out);
                sum += out[0];
            }
            let mean = sum / f64::from(n);
            let tol = 4.0 * sd / f64::from(n).sqrt();
            assert!(
                (mean - inst.mu[0]).abs() < tol,
                "kind {:?}: mean {mean} vs mu {} (tol {tol})",
                inst.kind,
                inst.mu[0]
            );
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let prior = InstancePrior::LinearUniform { k: 5, d: 3, sigma: 0.5 };
        let a = sample_instance(&prior, &mut stream("rep"));
        let b = sample_instance(&prior, &mut stream("rep"));
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.features, b.features);
        assert_eq!(a.theta_star, b.theta_star);
        assert_eq!(a.optimal_arm(), b.optimal_arm());
    }

    #[test]
    fn linear_optimal_matches_best_dot_product() {
        for j in 0..50 {
            let mut rng = derive_stream(Seed(10), &[("instance", j)]);
            let prior = InstancePrior::LinearUniform { k: 20, d: 4, sigma: 0.1 };
            let inst = sample_instance(&prior, &mut rng);
            let best = (0..inst.k)
                .max_by(|&a, &b| {
                    let da = dot(inst.arm_feature(a), &inst.theta_star);
                    let db = dot(inst.arm_feature(b), &inst.theta_star);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(inst.optimal_arm(), best);
        }
    }
}
