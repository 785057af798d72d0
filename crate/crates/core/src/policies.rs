//! The six tunable bandit policies.
//!
//! Every policy exposes one width parameter gamma in [0, 1]: a multiplier on
//! the confidence radius (UCB family) or on the posterior standard deviation
//! (Thompson family, via dividing Beta parameters by gamma^2 or scaling a
//! Gaussian covariance by gamma^2). gamma = 1 reproduces the untuned design
//! exactly. All radii are fixed up front from the known horizon n, with
//! failure level delta = 1/n.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::env::{dot, ProblemInstance};
use crate::error::{Error, Result};
use crate::numerics::{mvn_sample_into, sigmoid_prime, IrlsScratch};
use crate::rng::{argmax_tiebreak, ArmIndex, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Ucb1,
    BernTs,
    LinUcb,
    LinTs,
    UcbGlm,
    GlmTsl,
}

impl PolicyKind {
    pub fn is_structured(self) -> bool {
        matches!(self, PolicyKind::LinUcb | PolicyKind::LinTs | PolicyKind::UcbGlm | PolicyKind::GlmTsl)
    }

    /// Thompson-family policies scale posterior width instead of a bonus.
    pub fn is_posterior_width(self) -> bool {
        matches!(self, PolicyKind::BernTs | PolicyKind::LinTs | PolicyKind::GlmTsl)
    }

    /// Stable snake_case label used in config files and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::BernTs => "bern_ts",
            PolicyKind::LinUcb => "lin_ucb",
            PolicyKind::LinTs => "lin_ts",
            PolicyKind::UcbGlm => "ucb_glm",
            PolicyKind::GlmTsl => "glm_tsl",
        }
    }
}

/// Rewards must be in {0, 1} before reaching this policy's update.
pub fn needs_binary_rewards(kind: PolicyKind) -> bool {
    kind == PolicyKind::BernTs
}

/// Fully specified tunable policy for one horizon.
#[derive(Clone, Copy, Debug)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub gamma: f64,
    /// Horizon; sets delta = 1/n and the fixed radii.
    pub n: usize,
    /// Ridge for the linear design matrix G = lambda I + sum x x'.
    pub lambda: f64,
    /// Reward noise scale in the linear confidence radius; also the sigma of
    /// sigma/kappa in the GLM bonus.
    pub sigma: f64,
    /// Minimum sigmoid slope in the GLM bonus (sigma/kappa = 2 by default).
    pub kappa: f64,
    /// Ridge regularizer for the logistic MLE and the Laplace matrix H.
    pub glm_ridge: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, gamma: f64, n: usize) -> Self {
        PolicySpec { kind, gamma, n, lambda: 1.0, sigma: 0.5, kappa: 0.25, glm_ridge: 1e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter("horizon n must be at least 1".into()));
        }
        if self.kind == PolicyKind::BernTs && self.gamma == 0.0 {
            return Err(Error::DegeneratePosterior);
        }
        if self.lambda <= 0.0 || self.sigma <= 0.0 || self.kappa <= 0.0 || self.glm_ridge < 0.0 {
            return Err(Error::InvalidParameter(
                "lambda, sigma, kappa must be positive and glm_ridge nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Scales a Beta posterior to gamma times its width: (a, b) -> (a, b) / gamma^2.
pub fn ts_width_transform(alpha: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    if gamma == 0.0 {
        return Err(Error::DegeneratePosterior);
    }
    let inv = 1.0 / (gamma * gamma);
    Ok((alpha * inv, beta * inv))
}

/// Fixed confidence radius g(n) or posterior scale g_tilde(n).
///
/// lin_ucb uses the self-normalized bound with feature and parameter norms
/// at most sqrt(d); lin_ts and glm_tsl use g_tilde(n) = 9 d log(n/delta);
/// ucb_glm uses sqrt((d/2) log(1 + 2n/d) + log(1/delta)). delta = 1/n.
pub fn confidence_radius(kind: PolicyKind, n: usize, d: usize, lambda: f64, sigma: f64) -> f64 {
    assert!(n >= 1 && d >= 1);
    let nf = n as f64;
    let df = d as f64;
    match kind {
        PolicyKind::LinUcb => {
            ((df * ((1.0 + nf / lambda) * nf).ln()).sqrt()) + lambda.sqrt() * df.sqrt() / sigma
        }
        PolicyKind::LinTs | PolicyKind::GlmTsl => 9.0 * df * (nf * nf).ln(),
        PolicyKind::UcbGlm => ((df / 2.0) * (1.0 + 2.0 * nf / df).ln() + nf.ln()).sqrt(),
        PolicyKind::Ucb1 | PolicyKind::BernTs => {
            panic!("tabular policies have no fixed design radius")
        }
    }
}

/// Pull counts and reward sums for the tabular policies.
#[derive(Clone, Debug)]
pub struct TabularState {
    pulls: Vec<f64>,
    sums: Vec<f64>,
    /// gamma * sqrt(2 log(1/delta)) with delta = 1/n.
    bonus: f64,
    inv_gamma_sq: f64,
    scores: Vec<f64>,
}

/// Ridge design state shared by policies that track G = lambda I + sum x x'.
///
/// G^{-1} is maintained by rank-one updates; the per-arm quadratic forms
/// v_i = x_i' G^{-1} x_i are updated incrementally from the same rank-one
/// identity and recomputed from scratch every 512 rounds to pin down
/// accumulated rounding.
#[derive(Clone, Debug)]
pub struct DesignState {
    d: usize,
    g_inv: DMatrix<f64>,
    b: DVector<f64>,
    theta: DVector<f64>,
    v: Vec<f64>,
    z: DVector<f64>,
    w: Vec<f64>,
    updates: usize,
}

const V_REFRESH_PERIOD: usize = 512;

impl DesignState {
    fn new(d: usize, lambda: f64, inst: &ProblemInstance, track_v: bool) -> Self {
        let g_inv = DMatrix::identity(d, d) / lambda;
        let v = if track_v {
            inst.features.chunks_exact(d).map(|x| dot(x, x) / lambda).collect()
        } else {
            Vec::new()
        };
        DesignState {
            d,
            g_inv,
            b: DVector::zeros(d),
            theta: DVector::zeros(d),
            v,
            z: DVector::zeros(d),
            w: vec![0.0; if track_v { inst.k } else { 0 }],
            updates: 0,
        }
    }

    /// Rank-one update of G^{-1} (and the cached v_i) after observing x.
    fn observe(&mut self, x: &[f64], inst: &ProblemInstance) {
        let d = self.d;
        for i in 0..d {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.g_inv[(i, j)] * xj;
            }
            self.z[i] = acc;
        }
        let denom = 1.0 + dot(x, self.z.as_slice());
        let inv_denom = 1.0 / denom;
        if !self.v.is_empty() {
            // v_i' = v_i - (x_i' z)^2 / denom for every arm.
            for (wi, xi) in self.w.iter_mut().zip(inst.features.chunks_exact(d)) {
                *wi = dot(xi, self.z.as_slice());
            }
            for (vi, wi) in self.v.iter_mut().zip(&self.w) {
                *vi -= wi * wi * inv_denom;
            }
        }
        for j in 0..d {
            let zj = self.z[j] * inv_denom;
            for i in 0..d {
                self.g_inv[(i, j)] -= self.z[i] * zj;
            }
        }
        self.updates += 1;
        if !self.v.is_empty() && self.updates % V_REFRESH_PERIOD == 0 {
            self.refresh_v(inst);
        }
    }

    fn refresh_v(&mut self, inst: &ProblemInstance) {
        let d = self.d;
        for (vi, xi) in self.v.iter_mut().zip(inst.features.chunks_exact(d)) {
            let mut acc = 0.0;
            for a in 0..d {
                let mut row = 0.0;
                for bcol in 0..d {
                    row += self.g_inv[(a, bcol)] * xi[bcol];
                }
                acc += xi[a] * row;
            }
            *vi = acc;
        }
    }
}

/// State of the two linear policies.
#[derive(Clone, Debug)]
pub struct LinearState {
    design: DesignState,
    /// gamma * sigma * g(n) for lin_ucb.
    bonus_coef: f64,
    /// gamma^2 * g_tilde(n) for lin_ts.
    cov_scale: f64,
    scores: Vec<f64>,
    theta_tilde: DVector<f64>,
}

/// State of the two generalized-linear policies.
#[derive(Clone, Debug)]
pub struct GlmState {
    /// Only ucb_glm tracks the design; glm_tsl samples from H instead.
    design: Option<DesignState>,
    pulls: Vec<f64>,
    successes: Vec<f64>,
    pulled: Vec<ArmIndex>,
    theta: DVector<f64>,
    h: DMatrix<f64>,
    irls: IrlsScratch,
    warmup: usize,
    rounds: usize,
    /// gamma * (sigma/kappa) * g(n) for ucb_glm.
    bonus_coef: f64,
    /// gamma^2 * g_tilde(n) for glm_tsl.
    cov_scale: f64,
    ridge: f64,
    scores: Vec<f64>,
    theta_tilde: DVector<f64>,
    z: DVector<f64>,
}

/// Per-episode mutable policy state; never shared across episodes.
///
/// Variants are boxed to keep the enum one pointer wide; every episode
/// allocates exactly one state.
#[derive(Clone, Debug)]
pub enum PolicyState {
    Ucb1(Box<TabularState>),
    BernTs(Box<TabularState>),
    LinUcb(Box<LinearState>),
    LinTs(Box<LinearState>),
    UcbGlm(Box<GlmState>),
    GlmTsl(Box<GlmState>),
}

impl PolicyState {
    pub fn new(spec: &PolicySpec, inst: &ProblemInstance) -> Result<PolicyState> {
        spec.validate()?;
        let k = inst.k;
        let tabular = || {
            Box::new(TabularState {
                pulls: vec![0.0; k],
                sums: vec![0.0; k],
                bonus: spec.gamma * (2.0 * (spec.n as f64).ln()).sqrt(),
                inv_gamma_sq: 1.0 / (spec.gamma * spec.gamma),
                scores: vec![0.0; k],
            })
        };
        let structured = |kind: PolicyKind| -> Result<()> {
            if inst.d == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{kind:?} requires a structured instance with features"
                )));
            }
            Ok(())
        };
        Ok(match spec.kind {
            PolicyKind::Ucb1 => PolicyState::Ucb1(tabular()),
            PolicyKind::BernTs => PolicyState::BernTs(tabular()),
            PolicyKind::LinUcb | PolicyKind::LinTs => {
                structured(spec.kind)?;
                let d = inst.d;
                let g = confidence_radius(spec.kind, spec.n, d, spec.lambda, spec.sigma);
                let st = Box::new(LinearState {
                    design: DesignState::new(d, spec.lambda, inst, spec.kind == PolicyKind::LinUcb),
                    bonus_coef: spec.gamma * spec.sigma * g,
                    cov_scale: spec.gamma * spec.gamma * g,
                    scores: vec![0.0; k],
                    theta_tilde: DVector::zeros(d),
                });
                if spec.kind == PolicyKind::LinUcb {
                    PolicyState::LinUcb(st)
                } else {
                    PolicyState::LinTs(st)
                }
            }
            PolicyKind::UcbGlm | PolicyKind::GlmTsl => {
                structured(spec.kind)?;
                let d = inst.d;
                let g = confidence_radius(spec.kind, spec.n, d, spec.lambda, spec.sigma);
                let st = Box::new(GlmState {
                    design: (spec.kind == PolicyKind::UcbGlm)
                        .then(|| DesignState::new(d, spec.lambda, inst, true)),
                    pulls: vec![0.0; k],
                    successes: vec![0.0; k],
                    pulled: Vec::with_capacity(k.min(64)),
                    theta: DVector::zeros(d),
                    h: DMatrix::zeros(d, d),
                    irls: IrlsScratch::new(d, k),
                    warmup: d.max(10),
                    rounds: 0,
                    bonus_coef: spec.gamma * (spec.sigma / spec.kappa) * g,
                    cov_scale: spec.gamma * spec.gamma * g,
                    ridge: spec.glm_ridge,
                    scores: vec![0.0; k],
                    theta_tilde: DVector::zeros(d),
                    z: DVector::zeros(d),
                });
                if spec.kind == PolicyKind::UcbGlm {
                    PolicyState::UcbGlm(st)
                } else {
                    PolicyState::GlmTsl(st)
                }
            }
        })
    }

    /// Chooses the arm for the next round.
    pub fn select(&mut self, inst: &ProblemInstance, rng: &mut RandomStream) -> Result<ArmIndex> {
        match self {
            PolicyState::Ucb1(st) => ucb1_select(st, rng),
            PolicyState::BernTs(st) => bern_ts_select(st, rng),
            PolicyState::LinUcb(st) => lin_ucb_select(st, inst, rng),
            PolicyState::LinTs(st) => lin_ts_select(st, inst, rng),
            PolicyState::UcbGlm(st) => ucb_glm_select(st, inst, rng),
            PolicyState::GlmTsl(st) => glm_tsl_select(st, inst, rng),
        }
    }

    /// Feeds back the pulled arm's reward.
    ///
    /// bern_ts expects rewards already in {0, 1}; the evaluator binarizes
    /// non-binary rewards before calling this.
    pub fn update(&mut self, inst: &ProblemInstance, arm: ArmIndex, reward: f64) -> Result<()> {
        match self {
            PolicyState::Ucb1(st) => {
                st.pulls[arm] += 1.0;
                st.sums[arm] += reward;
                Ok(())
            }
            PolicyState::BernTs(st) => {
                debug_assert!(reward == 0.0 || reward == 1.0);
                st.pulls[arm] += 1.0;
                st.sums[arm] += reward;
                Ok(())
            }
            PolicyState::LinUcb(st) | PolicyState::LinTs(st) => {
                let x = inst.arm_feature(arm);
                st.design.observe(x, inst);
                for (bi, &xi) in st.design.b.iter_mut().zip(x) {
                    *bi += xi * reward;
                }
                // theta = G^{-1} b.
                let d = st.design.d;
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += st.design.g_inv[(i, j)] * st.design.b[j];
                    }
                    st.design.theta[i] = acc;
                }
                Ok(())
            }
            PolicyState::UcbGlm(st) | PolicyState::GlmTsl(st) => glm_update(st, inst, arm, reward),
        }
    }

    /// Scores computed by the last select call (tabular and UCB variants).
    #[cfg(test)]
    pub(crate) fn last_scores(&self) -> &[f64] {
        match self {
            PolicyState::Ucb1(st) | PolicyState::BernTs(st) => &st.scores,
            PolicyState::LinUcb(st) | PolicyState::LinTs(st) => &st.scores,
            PolicyState::UcbGlm(st) | PolicyState::GlmTsl(st) => &st.scores,
        }
    }
}

fn ucb1_select(st: &mut TabularState, rng: &mut RandomStream) -> Result<ArmIndex> {
    // Initialization sweep: lowest-indexed unpulled arm first.
    if let Some(i) = st.pulls.iter().position(|&t| t == 0.0) {
        return Ok(i);
    }
    for i in 0..st.pulls.len() {
        st.scores[i] = st.sums[i] / st.pulls[i] + st.bonus / st.pulls[i].sqrt();
    }
    argmax_tiebreak(&st.scores, rng)
}

fn bern_ts_select(st: &mut TabularState, rng: &mut RandomStream) -> Result<ArmIndex> {
    for i in 0..st.pulls.len() {
        let alpha = (st.sums[i] + 1.0) * st.inv_gamma_sq;
        let beta = (st.pulls[i] - st.sums[i] + 1.0) * st.inv_gamma_sq;
        st.scores[i] = rng.beta(alpha, beta);
    }
    argmax_tiebreak(&st.scores, rng)
}

fn lin_ucb_select(
    st: &mut LinearState,
    inst: &ProblemInstance,
    rng: &mut RandomStream,
) -> Result<ArmIndex> {
    let d = st.design.d;
    let theta = st.design.theta.as_slice();
    for ((s, x), &v) in
        st.scores.iter_mut().zip(inst.features.chunks_exact(d)).zip(&st.design.v)
    {
        *s = dot(x, theta) + st.bonus_coef * v.max(0.0).sqrt();
    }
    argmax_tiebreak(&st.scores, rng)
}

fn lin_ts_select(
    st: &mut LinearState,
    inst: &ProblemInstance,
    rng: &mut RandomStream,
) -> Result<ArmIndex> {
    let d = st.design.d;
    if st.cov_scale == 0.0 {
        st.theta_tilde.copy_from(&st.design.theta);
    } else {
        let cov = &st.design.g_inv * st.cov_scale;
        let chol = cholesky_with_jitter(cov)?;
        mvn_sample_into(&st.design.theta, &chol, rng, &mut st.theta_tilde);
    }
    let theta = st.theta_tilde.as_slice();
    for (s, x) in st.scores.iter_mut().zip(inst.features.chunks_exact(d)) {
        *s = dot(x, theta);
    }
    argmax_tiebreak(&st.scores, rng)
}

/// Cholesky of a maintained covariance; a vanishing jitter absorbs the rare
/// loss of positive definiteness from accumulated rank-one rounding.
fn cholesky_with_jitter(mut cov: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    match Cholesky::new(cov.clone()) {
        Some(c) => Ok(c),
        None => {
            let jitter = 1e-10 * cov.diagonal().amax().max(1e-300);
            for i in 0..cov.nrows() {
                cov[(i, i)] += jitter;
            }
            Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)
        }
    }
}

fn ucb_glm_select(
    st: &mut GlmState,
    inst: &ProblemInstance,
    rng: &mut RandomStream,
) -> Result<ArmIndex> {
    if st.rounds < st.warmup {
        return Ok(rng.next_below(inst.k));
    }
    let d = inst.d;
    let design = st.design.as_ref().expect("ucb_glm tracks the design");
    let theta = st.theta.as_slice();
    for ((s, x), &v) in st.scores.iter_mut().zip(inst.features.chunks_exact(d)).zip(&design.v) {
        *s = dot(x, theta) + st.bonus_coef * v.max(0.0).sqrt();
    }
    argmax_tiebreak(&st.scores, rng)
}

fn glm_tsl_select(
    st: &mut GlmState,
    inst: &ProblemInstance,
    rng: &mut RandomStream,
) -> Result<ArmIndex> {
    if st.rounds < st.warmup {
        return Ok(rng.next_below(inst.k));
    }
    let d = inst.d;
    if st.cov_scale == 0.0 {
        st.theta_tilde.copy_from(&st.theta);
    } else {
        // theta_tilde = theta + sqrt(cov_scale) * L^{-T} z has covariance
        // cov_scale * H^{-1} when H = L L'.
        let chol = cholesky_with_jitter(st.h.clone()).map_err(|_| Error::DegenerateHessian)?;
        for i in 0..d {
            st.z[i] = rng.normal();
        }
        let l = chol.l_dirty();
        let scale = st.cov_scale.sqrt();
        for i in (0..d).rev() {
            let mut acc = st.z[i];
            for j in i + 1..d {
                acc -= l[(j, i)] * st.theta_tilde[j];
            }
            st.theta_tilde[i] = acc / l[(i, i)];
        }
        for i in 0..d {
            st.theta_tilde[i] = st.theta[i] + scale * st.theta_tilde[i];
        }
    }
    let theta = st.theta_tilde.as_slice();
    for (s, x) in st.scores.iter_mut().zip(inst.features.chunks_exact(d)) {
        *s = dot(x, theta);
    }
    argmax_tiebreak(&st.scores, rng)
}

fn glm_update(
    st: &mut GlmState,
    inst: &ProblemInstance,
    arm: ArmIndex,
    reward: f64,
) -> Result<()> {
    assert!(reward == 0.0 || reward == 1.0, "GLM policies expect binary rewards");
    let d = inst.d;
    if st.pulls[arm] == 0.0 {
        st.pulled.push(arm);
    }
    st.pulls[arm] += 1.0;
    st.successes[arm] += reward;
    st.rounds += 1;
    if let Some(design) = st.design.as_mut() {
        design.observe(inst.arm_feature(arm), inst);
    }
    // Refit the MLE from the full history (grouped by arm) with warm start.
    crate::numerics::irls_logistic_grouped(
        &inst.features,
        d,
        &st.pulled,
        &st.pulls,
        &st.successes,
        st.ridge,
        1e-6,
        150,
        &mut st.theta,
        &mut st.irls,
        |_| {},
    )?;
    refresh_h(st, inst);
    Ok(())
}

/// H = ridge I + sum over pulled arms of T_i sigmoid'(x_i' theta) x_i x_i'.
fn refresh_h(st: &mut GlmState, inst: &ProblemInstance) {
    let d = inst.d;
    st.h.fill(0.0);
    for i in 0..d {
        st.h[(i, i)] = st.ridge;
    }
    for &arm in &st.pulled {
        let x = inst.arm_feature(arm);
        let w = st.pulls[arm] * sigmoid_prime(dot(x, st.theta.as_slice()));
        for a in 0..d {
            let wxa = w * x[a];
            for b in a..d {
                st.h[(a, b)] += wxa * x[b];
            }
        }
    }
    for a in 0..d {
        for b in a + 1..d {
            st.h[(b, a)] = st.h[(a, b)];
        }
    }
}
