//! Dense linear-algebra kernels for the structured policies.
//!
//! Factorizations delegate to `nalgebra`; the rank-one inverse update and the
//! logistic-regression solver are written out here because their exact
//! behavior (update formula, monotone ascent, gradient stopping rule) is part
//! of the policy contracts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Derivative of the sigmoid, sigmoid(x) * (1 - sigmoid(x)).
#[inline]
pub fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// log(1 + exp(x)) without overflow for large |x|.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Lower-triangular L with L * L' = a.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    debug_assert!(is_symmetric(a, 1e-12));
    Cholesky::new(a.clone()).map(|c| c.unpack()).ok_or(Error::NotPositiveDefinite)
}

fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    let scale = a.amax().max(1.0);
    (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol * scale))
}

/// Draws mean + chol_cov * z with z standard normal, writing into `out`.
pub fn mvn_sample_into(
    mean: &DVector<f64>,
    chol_cov: &Cholesky<f64, Dyn>,
    rng: &mut RandomStream,
    out: &mut DVector<f64>,
) {
    let d = mean.len();
    debug_assert_eq!(out.len(), d);
    for i in 0..d {
        out[i] = rng.normal();
    }
    // In-place z <- L z, descending so unread entries stay untouched. Only
    // the lower triangle of `l_dirty` is valid; the upper holds leftovers.
    let l = chol_cov.l_dirty();
    for i in (0..d).rev() {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * out[j];
        }
        out[i] = acc;
    }
    *out += mean;
}

/// Draws one multivariate-normal sample given a lower-triangular factor.
pub fn mvn_sample(
    mean: &DVector<f64>,
    chol_cov: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.normal());
    mean + chol_cov * z
}

/// (G + x x')^{-1} from G^{-1}: G_inv - (G_inv x)(G_inv x)' / (1 + x' G_inv x).
pub fn sherman_morrison_update(g_inv: &DMatrix<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let mut out = g_inv.clone();
    let mut z = DVector::zeros(x.len());
    sherman_morrison_update_in_place(&mut out, x.as_slice(), &mut z);
    out
}

/// In-place variant; `z` is scratch of length d.
pub fn sherman_morrison_update_in_place(
    g_inv: &mut DMatrix<f64>,
    x: &[f64],
    z: &mut DVector<f64>,
) {
    let d = x.len();
    debug_assert_eq!(g_inv.nrows(), d);
    for i in 0..d {
        let mut acc = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            acc += g_inv[(i, j)] * xj;
        }
        z[i] = acc;
    }
    let denom = 1.0 + x.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
    let inv_denom = 1.0 / denom;
    for j in 0..d {
        let zj = z[j] * inv_denom;
        for i in 0..d {
            g_inv[(i, j)] -= z[i] * zj;
        }
    }
}

/// Reusable buffers for [`irls_logistic_grouped`].
#[derive(Clone, Debug)]
pub struct IrlsScratch {
    hess: DMatrix<f64>,
    grad: DVector<f64>,
    dir: DVector<f64>,
    cand: DVector<f64>,
    logits: Vec<f64>,
}

impl IrlsScratch {
    pub fn new(d: usize, max_groups: usize) -> Self {
        IrlsScratch {
            hess: DMatrix::zeros(d, d),
            grad: DVector::zeros(d),
            dir: DVector::zeros(d),
            cand: DVector::zeros(d),
            logits: Vec::with_capacity(max_groups),
        }
    }
}

/// Newton-step length cap for [`irls_logistic_grouped`]. Logistic logits on
/// the box-bounded features here stay far inside +/-700, so capped steps can
/// never overflow the likelihood, and 10.0 reaches any separated optimum in
/// few iterations while leaving ordinary Newton steps untouched.
pub const IRLS_TRUST_RADIUS: f64 = 10.0;

/// Ridge-penalized logistic MLE over observations grouped by arm.
///
/// `arms` lists the distinct rows of `features` (row-major K x d) that carry
/// observations; `pulls[i]` and `successes[i]` are the per-arm totals. The
/// grouping is exact: the likelihood depends on the history only through
/// these sufficient statistics. `theta` holds the starting point (warm start)
/// and is left at the solution. Newton steps with step halving keep the
/// penalized log-likelihood non-decreasing; convergence is declared when the
/// gradient max-norm falls below `tol`, or when no step can improve the
/// likelihood and the predicted Newton gain is below its float resolution
/// (the solution is then exact to machine precision even if `tol` is
/// unattainably small).
///
/// Separable data pushes the penalized optimum far from the origin while the
/// Hessian collapses toward `ridge * I`, so raw Newton directions there are
/// of order `|grad| / ridge` and step halving alone crawls. Directions longer
/// than [`IRLS_TRUST_RADIUS`] are rescaled to that length before the line
/// search, which keeps every iteration's progress linear in the radius.
#[allow(clippy::too_many_arguments)]
pub fn irls_logistic_grouped(
    features: &[f64],
    d: usize,
    arms: &[usize],
    pulls: &[f64],
    successes: &[f64],
    ridge: f64,
    tol: f64,
    max_iter: usize,
    theta: &mut DVector<f64>,
    scratch: &mut IrlsScratch,
    mut on_accepted_step: impl FnMut(f64),
) -> Result<usize> {
    debug_assert!(ridge >= 0.0 && tol > 0.0 && theta.len() == d);
    let row = |i: usize| &features[i * d..(i + 1) * d];
    let penalized_ll = |th: &DVector<f64>| -> f64 {
        let mut ll = -0.5 * ridge * th.dot(th);
        for &i in arms {
            let z = dot(row(i), th.as_slice());
            ll += successes[i] * z - pulls[i] * softplus(z);
        }
        ll
    };

    let mut ll = penalized_ll(theta);
    // Consecutive accepted steps that left the objective bitwise unchanged.
    let mut flat_steps = 0usize;
    for iter in 0..=max_iter {
        // Gradient: sum_i (S_i - T_i mu_i) x_i - ridge * theta.
        scratch.grad.copy_from(theta);
        scratch.grad *= -ridge;
        scratch.logits.clear();
        for &i in arms {
            let x = row(i);
            let z = dot(x, theta.as_slice());
            scratch.logits.push(z);
            let coef = successes[i] - pulls[i] * sigmoid(z);
            for (g, &xj) in scratch.grad.iter_mut().zip(x) {
                *g += coef * xj;
            }
        }
        let grad_norm = scratch.grad.amax();
        if grad_norm < tol {
            return Ok(iter);
        }
        if iter == max_iter {
            return Err(Error::NoConvergence { max_iter, grad_norm });
        }

        // Hessian of the negated objective: sum_i T_i mu_i(1-mu_i) x_i x_i' + ridge I.
        scratch.hess.fill(0.0);
        for (&i, &z) in arms.iter().zip(&scratch.logits) {
            let w = pulls[i] * sigmoid_prime(z);
            let x = row(i);
            for a in 0..d {
                let wxa = w * x[a];
                for b in a..d {
                    scratch.hess[(a, b)] += wxa * x[b];
                }
            }
        }
        for a in 0..d {
            scratch.hess[(a, a)] += ridge;
            for b in a + 1..d {
                scratch.hess[(b, a)] = scratch.hess[(a, b)];
            }
        }
        let chol = Cholesky::new(scratch.hess.clone()).ok_or(Error::DegenerateHessian)?;
        scratch.dir.copy_from(&scratch.grad);
        chol.solve_mut(&mut scratch.dir);

        // With many observations the likelihood's float resolution exceeds
        // the last attainable gains; once the predicted Newton gain
        // g'H^-1 g / 2 falls below that resolution, theta maximizes the
        // objective to machine precision even if `tol` is out of reach.
        let predicted_gain = 0.5 * scratch.grad.dot(&scratch.dir);
        if predicted_gain <= 4.0 * f64::EPSILON * (1.0 + ll.abs()) {
            return Ok(iter);
        }

        let dir_norm = scratch.dir.norm();
        if dir_norm > IRLS_TRUST_RADIUS {
            scratch.dir *= IRLS_TRUST_RADIUS / dir_norm;
        }

        // Step halving: accept the first candidate that does not decrease
        // the penalized log-likelihood; give up along this direction after
        // 40 halvings (step is then ~1e-12 of the Newton step).
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            scratch.cand.copy_from(theta);
            scratch.cand.axpy(step, &scratch.dir, 1.0);
            let cand_ll = penalized_ll(&scratch.cand);
            if cand_ll >= ll {
                flat_steps = if cand_ll > ll { 0 } else { flat_steps + 1 };
                theta.copy_from(&scratch.cand);
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No admissible step: report the gradient left behind.
            return Err(Error::NoConvergence { max_iter, grad_norm });
        }
        on_accepted_step(ll);
        // The objective is concave, so two consecutive steps that cannot
        // move it at float resolution pin the maximum to machine precision.
        if flat_steps >= 2 {
            return Ok(iter);
        }
    }
    unreachable!("loop returns before exhausting iterations");
}

/// Ridge-penalized logistic MLE over per-observation data.
///
/// Satisfies ||sum_t (y_t - sigmoid(x_t' theta)) x_t - ridge * theta||_inf < tol
/// at the returned point.
pub fn irls_logistic(
    d: usize,
    xs: &[Vec<f64>],
    ys: &[f64],
    ridge: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    assert_eq!(xs.len(), ys.len(), "xs and ys must have equal length");
    assert!(ys.iter().all(|&y| y == 0.0 || y == 1.0), "labels must be 0 or 1");
    let mut features = Vec::with_capacity(xs.len() * d);
    for x in xs {
        assert_eq!(x.len(), d);
        features.extend_from_slice(x);
    }
    let arms: Vec<usize> = (0..xs.len()).collect();
    let pulls = vec![1.0; xs.len()];
    let mut theta = DVector::zeros(d);
    let mut scratch = IrlsScratch::new(d, xs.len());
    irls_logistic_grouped(
        &features, d, &arms, &pulls, ys, ridge, tol, max_iter, &mut theta, &mut scratch, |_| {},
    )?;
    Ok(theta.as_slice().to_vec())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Seed};
    use approx::assert_abs_diff_eq;

    fn stream(label: &str) -> RandomStream {
        derive_stream(Seed(77), &[(label, 0)])
    }

    fn random_spd(d: usize, rng: &mut RandomStream) -> DMatrix<f64> {
        let b = DMatrix::from_fn(d, d, |_, _| rng.normal());
        &b * b.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn cholesky_identity() {
        let i3 = DMatrix::identity(3, 3);
        assert_eq!(cholesky(&i3).unwrap(), i3);
    }

    #[test]
    fn cholesky_hand_case() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky(&a).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[(1, 1)], 2.0f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn cholesky_round_trip() {
        let mut rng = stream("spd");
        for d in 1..=20 {
            let a = random_spd(d, &mut rng);
            let l = cholesky(&a).unwrap();
            let err = (&l * l.transpose() - &a).norm() / a.norm();
            assert!(err < 1e-10, "d={d} relative error {err}");
        }
    }

    #[test]
    fn mvn_zero_cov_returns_mean() {
        let mut rng = stream("mvn0");
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(mvn_sample(&mean, &zero, &mut rng), mean);
    }

    #[test]
    fn mvn_identity_cov_moments() {
        let mut rng = stream("mvn1");
        let mean = DVector::zeros(2);
        let l = DMatrix::identity(2, 2);
        let n = 100_000;
        let mut cov = [[0.0f64; 2]; 2];
        for _ in 0..n {
            let x = mvn_sample(&mean, &l, &mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += x[i] * x[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                let got = cov[i][j] / f64::from(n);
                assert!((got - target).abs() < 0.02, "cov[{i}][{j}] = {got}");
            }
        }
    }

    #[test]
    fn mvn_small_cov_mean() {
        let mut rng = stream("mvn2");
        let mean = DVector::from_vec(vec![5.0, 5.0]);
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1]));
        let n = 100_000;
        let mut sum = DVector::zeros(2);
        for _ in 0..n {
            sum += mvn_sample(&mean, &l, &mut rng);
        }
        sum /= f64::from(n);
        assert!((sum[0] - 5.0).abs() < 0.01 && (sum[1] - 5.0).abs() < 0.01);
    }

    #[test]
    fn mvn_into_matches_explicit_form() {
        let mut rng_a = stream("mvnq");
        let mut rng_b = stream("mvnq");
        let mean = DVector::from_vec(vec![0.5, -0.25]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let chol = Cholesky::new(a.clone()).unwrap();
        let l = chol.l();
        let mut out = DVector::zeros(2);
        for _ in 0..100 {
            mvn_sample_into(&mean, &chol, &mut rng_a, &mut out);
            let want = mvn_sample(&mean, &l, &mut rng_b);
            assert_abs_diff_eq!(out[0], want[0], epsilon = 1e-14);
            assert_abs_diff_eq!(out[1], want[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn sherman_morrison_scalar() {
        let g_inv = DMatrix::from_element(1, 1, 1.0);
        let x = DVector::from_vec(vec![1.0]);
        let out = sherman_morrison_update(&g_inv, &x);
        assert_abs_diff_eq!(out[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sherman_morrison_zero_vector() {
        let mut rng = stream("sm0");
        let g = random_spd(4, &mut rng);
        let g_inv = g.try_inverse().unwrap();
        let out = sherman_morrison_update(&g_inv, &DVector::zeros(4));
        assert_eq!(out, g_inv);
    }

    #[test]
    fn sherman_morrison_matches_direct_inverse() {
        let mut rng = stream("sm1");
        let g = random_spd(5, &mut rng);
        let x = DVector::from_fn(5, |_, _| rng.normal());
        let got = sherman_morrison_update(&g.clone().try_inverse().unwrap(), &x);
        let want = (&g + &x * x.transpose()).try_inverse().unwrap();
        assert!((got - want).norm() < 1e-8);
    }

    #[test]
    fn sherman_morrison_thousand_updates() {
        let d = 10;
        let mut rng = stream("sm2");
        let mut g = DMatrix::<f64>::identity(d, d);
        let mut g_inv = DMatrix::<f64>::identity(d, d);
        let mut z = DVector::zeros(d);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let xv = DVector::from_vec(x.clone());
            g += &xv * xv.transpose();
            sherman_morrison_update_in_place(&mut g_inv, &x, &mut z);
        }
        let direct = g.try_inverse().unwrap();
        let err = (&g_inv - &direct).norm() / direct.norm();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn irls_empty_history_returns_zero() {
        let theta = irls_logistic(3, &[], &[], 1e-6, 1e-8, 50).unwrap();
        assert_eq!(theta, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn irls_single_positive_observation() {
        let ridge = 1e-4;
        let tol = 1e-10;
        let theta = irls_logistic(1, &[vec![1.0]], &[1.0], ridge, tol, 200).unwrap()[0];
        assert!(theta > 5.0, "theta {theta} should be large positive");
        let grad = 1.0 - sigmoid(theta) - ridge * theta;
        assert!(grad.abs() < tol, "gradient {grad}");

        // Independent scalar Newton oracle on the same objective.
        let mut oracle: f64 = 0.0;
        for _ in 0..200 {
            let g = 1.0 - sigmoid(oracle) - ridge * oracle;
            let h = sigmoid_prime(oracle) + ridge;
            oracle += g / h;
        }
        assert_abs_diff_eq!(theta, oracle, epsilon = 1e-6);
    }

    #[test]
    fn irls_symmetric_data_gives_zero() {
        let xs = vec![vec![1.0], vec![-1.0]];
        let ys = vec![1.0, 1.0];
        let theta = irls_logistic(1, &xs, &ys, 1e-6, 1e-10, 100).unwrap()[0];
        assert_abs_diff_eq!(theta, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn irls_monotone_penalized_likelihood() {
        let mut rng = stream("irls");
        for trial in 0..20 {
            let d = 3;
            let n = 40;
            let theta_true: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let mut features = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
                let p = sigmoid(dot(&x, &theta_true));
                ys.push(f64::from(u8::from(rng.bernoulli(p))));
                features.extend_from_slice(&x);
            }
            let arms: Vec<usize> = (0..n).collect();
            let pulls = vec![1.0; n];
            let mut theta = DVector::zeros(d);
            let mut scratch = IrlsScratch::new(d, n);
            let mut lls = Vec::new();
            irls_logistic_grouped(
                &features, d, &arms, &pulls, &ys, 1e-6, 1e-8, 100, &mut theta, &mut scratch,
                |ll| lls.push(ll),
            )
            .unwrap();
            for w in lls.windows(2) {
                assert!(w[1] >= w[0], "trial {trial}: LL decreased {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn irls_grouping_matches_per_observation() {
        // 30 pulls of 3 distinct arms must give the same MLE whether passed
        // as raw observations or as grouped sufficient statistics.
        let mut rng = stream("group");
        let d = 2;
        let rows = [[0.8, -0.3], [-0.5, 0.9], [0.2, 0.4]];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut pulls = vec![0.0; 3];
        let mut successes = vec![0.0; 3];
        for t in 0..30 {
            let i = t % 3;
            let y = f64::from(u8::from(rng.bernoulli(0.3 + 0.2 * i as f64)));
            xs.push(rows[i].to_vec());
            ys.push(y);
            pulls[i] += 1.0;
            successes[i] += y;
        }
        let per_obs = irls_logistic(d, &xs, &ys, 1e-6, 1e-10, 100).unwrap();

        let features: Vec<f64> = rows.iter().flatten().copied().collect();
        let mut theta = DVector::zeros(d);
        let mut scratch = IrlsScratch::new(d, 3);
        irls_logistic_grouped(
            &features, d, &[0, 1, 2], &pulls, &successes, 1e-6, 1e-10, 100, &mut theta,
            &mut scratch, |_| {},
        )
        .unwrap();
        for j in 0..d {
            assert_abs_diff_eq!(per_obs[j], theta[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn irls_large_counts_converge_despite_float_resolution() {
        // With ~1e5 observations the log-likelihood is O(1e4) and its float
        // resolution caps the reachable gradient norm above any tiny tol;
        // the solver must still declare the machine-precision optimum.
        let d = 2;
        let features = vec![0.8, -0.3, -0.5, 0.9, 0.2, 0.4];
        let pulls = vec![40_000.0, 30_000.0, 30_000.0];
        let successes = vec![22_000.0, 17_500.0, 16_000.0];
        let solve = |tol: f64| {
            let mut theta = DVector::zeros(d);
            let mut scratch = IrlsScratch::new(d, 3);
            irls_logistic_grouped(
                &features, d, &[0, 1, 2], &pulls, &successes, 1e-6, tol, 200, &mut theta,
                &mut scratch, |_| {},
            )
            .unwrap();
            theta
        };
        let stalled = solve(1e-16);
        let relaxed = solve(1e-5);
        for j in 0..d {
            assert_abs_diff_eq!(stalled[j], relaxed[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn irls_separable_data_reaches_the_far_penalized_optimum() {
        // Linearly separable labels put the penalized optimum at |theta| in
        // the tens while the Hessian collapses toward ridge * I; the solver
        // must reach it well inside the iteration budget the contextual
        // policies grant it, not stall with the gradient just above tol.
        let d = 5;
        let mut rng = stream("sep");
        let w = [0.9, -0.4, 0.2, -0.7, 0.5];
        let mut features: Vec<f64> = Vec::new();
        let mut margins: Vec<f64> = Vec::new();
        while margins.len() < 12 {
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            if m.abs() >= 0.4 {
                features.extend_from_slice(&x);
                margins.push(m);
            }
        }
        let arms: Vec<usize> = (0..margins.len()).collect();
        let pulls = vec![1.0; margins.len()];
        let successes: Vec<f64> =
            margins.iter().map(|&m| f64::from(u8::from(m > 0.0))).collect();
        let mut theta = DVector::zeros(d);
        let mut scratch = IrlsScratch::new(d, margins.len());
        let iters = irls_logistic_grouped(
            &features, d, &arms, &pulls, &successes, 1e-6, 1e-6, 150, &mut theta,
            &mut scratch, |_| {},
        )
        .unwrap();
        assert!(iters < 150, "took {iters} iterations");
        for (i, &m) in margins.iter().enumerate() {
            let z = dot(&features[i * d..(i + 1) * d], theta.as_slice());
            let p = sigmoid(z);
            if m > 0.0 {
                assert!(p > 0.95, "arm {i}: p = {p}");
            } else {
                assert!(p < 0.05, "arm {i}: p = {p}");
            }
        }
    }
}
