//! Diagnostics linking regret gaps to probe noise.
//!
//! The tuner's sample sizes are justified by a growth assumption: moving a
//! distance b - a left of the minimizer gamma* should open a regret gap of
//! at least m * max(sigma_a, sigma_b) * (b - a). This module measures that
//! relation on real policies so the constant m can be read off the data.

use crate::env::InstancePrior;
use crate::error::{Error, Result};
use crate::evaluator::{per_instance_regrets, RegretEstimate};
use crate::policies::PolicySpec;
use crate::rng::RandomStream;

/// One probe pair (a, b = gamma*) reduced to scatter coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterPoint {
    /// max(sigma_a, sigma_b) * (b - a); nonnegative by construction.
    pub x: f64,
    /// Estimated regret gap R(a) - R(b).
    pub y: f64,
    pub a: f64,
    pub b: f64,
    /// Standard error of y. Paired when both sides share reward streams.
    pub stderr_y: f64,
}

/// Summary of one gamma evaluation handed to the scatter builder:
/// (mean regret, per-instance std, per-instance samples).
type GammaEval = (f64, f64, Vec<f64>);

/// Builds scatter points from an arbitrary gamma evaluator.
///
/// Every `a` must lie strictly below `gamma_star`; the degenerate a == b
/// point is rejected. When the evaluator returns aligned per-instance
/// samples for both sides, stderr_y is the paired standard error, otherwise
/// the independent combination.
pub fn gap_std_scatter_with(
    mut eval: impl FnMut(f64) -> Result<GammaEval>,
    gamma_star: f64,
    a_grid: &[f64],
) -> Result<Vec<ScatterPoint>> {
    for &a in a_grid {
        if !(a < gamma_star) {
            return Err(Error::InvalidParameter(format!(
                "scatter point {a} must lie strictly below gamma_star {gamma_star}"
            )));
        }
    }
    let (mean_b, std_b, samples_b) = eval(gamma_star)?;
    let mut points = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let (mean_a, std_a, samples_a) = eval(a)?;
        points.push(ScatterPoint {
            x: std_a.max(std_b) * (gamma_star - a),
            y: mean_a - mean_b,
            a,
            b: gamma_star,
            stderr_y: gap_stderr(&samples_a, &samples_b),
        });
    }
    Ok(points)
}

fn gap_stderr(samples_a: &[f64], samples_b: &[f64]) -> f64 {
    if samples_a.len() == samples_b.len() && samples_a.len() > 1 {
        let diffs: Vec<f64> =
            samples_a.iter().zip(samples_b).map(|(a, b)| a - b).collect();
        RegretEstimate::from_samples(&diffs).stderr
    } else {
        let sa = RegretEstimate::from_samples(samples_a).stderr;
        let sb = RegretEstimate::from_samples(samples_b).stderr;
        (sa * sa + sb * sb).sqrt()
    }
}

/// Scatter for a tunable policy family on instances drawn from `prior`.
///
/// Every gamma is evaluated on the same instance and reward streams, so
/// gaps are paired differences and the y noise is far below the marginal
/// regret spread entering x.
pub fn gap_std_scatter(
    template: &PolicySpec,
    prior: &InstancePrior,
    gamma_star: f64,
    a_grid: &[f64],
    s: usize,
    n: usize,
    base: &RandomStream,
) -> Result<Vec<ScatterPoint>> {
    let stream = base.child("validate", 0);
    gap_std_scatter_with(
        |gamma| {
            let mut spec = template.clone();
            spec.gamma = gamma;
            let samples = per_instance_regrets(&spec, prior, s, n, &stream)?;
            let est = RegretEstimate::from_samples(&samples);
            Ok((est.mean, est.std, samples))
        },
        gamma_star,
        a_grid,
    )
}

/// Largest slope consistent with y >= m x on every point, clipped at 0.
///
/// Needs at least two points with x > 0; a min-ratio fit, not a regression,
/// because the relation being checked is a one-sided bound.
pub fn estimate_m(points: &[ScatterPoint]) -> Result<f64> {
    let mut min_ratio = f64::INFINITY;
    let mut usable = 0usize;
    for p in points {
        if p.x > 0.0 {
            usable += 1;
            min_ratio = min_ratio.min(p.y / p.x);
        }
    }
    if usable < 2 {
        return Err(Error::NoPositiveGap);
    }
    Ok(min_ratio.max(0.0))
}

/// Pearson correlation of two equal-length samples.
///
/// Returns NaN when either side has zero variance or fewer than two points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "correlation needs equal-length samples");
    let len = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxy / (sxx * syy).sqrt()
}
