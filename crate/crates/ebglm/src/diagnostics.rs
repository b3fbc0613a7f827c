//! Runnable counterparts of the theory's objects: normalized Hellinger
//! distance, the KL-projected parameter on a candidate support, restricted
//! information eigenvalues, the beta-min condition, the sparse singular
//! value, and a moment-gap comparison of the within-model posterior with
//! its limiting Gaussian.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Configuration, Dataset};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, GlmFamily};
use crate::fit::{fit_mle_with, observed_information, score, SolverOptions};
use crate::posterior::{bvm_rho, conditional_posterior_draw, ScoreCache};
use crate::prior::Hyperparameters;
use crate::sampler::{estimate_coefficients, ChainResult};

/// Exhaustive support sweeps are desk-scale validation tools; beyond this
/// width the subset count is no longer worth enumerating.
pub const SWEEP_MAX_P: usize = 15;

/// Summary of the theory diagnostics for one fitted dataset.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub hellinger: f64,
    pub epsilon_n: f64,
    pub lambda_min_restricted: f64,
    pub lambda_max_restricted: f64,
    pub beta_min_satisfied: bool,
    pub beta_min_margin: f64,
    pub phi_sparse: f64,
    pub bvm_mean_gap: f64,
    pub bvm_cov_gap: f64,
    pub rho: f64,
}

/// Extreme restricted-information eigenvalues over small supports.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RestrictedEigenvalues {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Outcome of the beta-min signal-strength condition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BetaMinCheck {
    pub satisfied: bool,
    pub margin: f64,
}

/// Moment gaps between chain draws and the limiting Gaussian.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BvmComparison {
    pub mean_gap: f64,
    pub cov_gap: f64,
    pub rho: f64,
    /// Number of retained samples the draws were taken from.
    pub draws: usize,
}

fn check_theta_length(x: &DMatrix<f64>, theta: &DVector<f64>, label: &str) -> Result<()> {
    if theta.len() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "{label} has length {} but the design has {} columns",
            theta.len(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Normalized average Hellinger distance between the per-observation
/// response distributions at `theta_star` and `theta`: the square root of
/// the mean per-observation squared distance, always in [0, 1]. Linear
/// predictors must be finite.
pub fn hellinger_distance(
    x: &DMatrix<f64>,
    fam: &GlmFamily,
    theta_star: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<f64> {
    check_theta_length(x, theta_star, "theta_star")?;
    check_theta_length(x, theta, "theta")?;
    let lp_star = x * theta_star;
    let lp = x * theta;
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let sq = match fam.kind() {
            FamilyKind::Bernoulli => {
                let p1 = fam.mean(lp_star[i])?;
                let p2 = fam.mean(lp[i])?;
                1.0 - ((p1 * p2).sqrt() + ((1.0 - p1) * (1.0 - p2)).sqrt())
            }
            FamilyKind::Poisson => {
                let l1 = fam.mean(lp_star[i])?;
                let l2 = fam.mean(lp[i])?;
                let d = l1.sqrt() - l2.sqrt();
                1.0 - (-0.5 * d * d).exp()
            }
        };
        total += sq;
    }
    // Rounding can leave a tiny negative squared distance at equality.
    Ok((total / n as f64).max(0.0).sqrt())
}

/// Synthetic dataset whose responses are the model means under
/// `theta_star`; maximizing its likelihood solves the population score
/// equation.
fn projection_dataset(
    x: &DMatrix<f64>,
    fam: &GlmFamily,
    theta_star: &DVector<f64>,
) -> Result<Dataset> {
    check_theta_length(x, theta_star, "theta_star")?;
    let lp_star = x * theta_star;
    let mut y = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        y[i] = fam.mean(lp_star[i])?;
    }
    Dataset::from_parts(x.clone(), y, vec![])
}

/// Solves the population score equation on the synthetic dataset. The
/// line-searched solver cannot certify progress once the per-step
/// likelihood gain drops below floating-point resolution (on fractional
/// responses the stall can sit slightly above the default tolerance), so
/// it is run loosely as a globalized warm start and its result is
/// polished with pure Newton steps, which quadratic convergence takes to
/// the representable residual floor.
fn project_on(
    tilde: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
) -> Result<DVector<f64>> {
    let opts = SolverOptions {
        tol_factor: 1e-6,
        ..SolverOptions::default()
    };
    let fit = fit_mle_with(tilde, fam, config, &opts)?;
    if fit.degenerate {
        return Ok(fit.theta_hat);
    }
    let mut theta = fit.theta_hat;
    let mut residual = score(tilde, fam, config, &theta)?;
    for _ in 0..8 {
        if residual.norm() <= 1e-12 * tilde.n() as f64 {
            break;
        }
        let info = observed_information(tilde, fam, config, &theta)?;
        let Some(chol) = info.cholesky() else { break };
        let candidate = (&theta + chol.solve(&residual))
            .map(|v| v.clamp(-opts.box_bound, opts.box_bound));
        let next = score(tilde, fam, config, &candidate)?;
        if next.norm() < residual.norm() {
            theta = candidate;
            residual = next;
        } else {
            break;
        }
    }
    Ok(theta)
}

/// KL-projected parameter on `config`: the coefficient vector (length
/// `|config|`) at which the population score, the expected-data analog of
/// the restricted score equation, vanishes.
pub fn kl_projection(
    x: &DMatrix<f64>,
    fam: &GlmFamily,
    theta_star: &DVector<f64>,
    config: &Configuration,
) -> Result<DVector<f64>> {
    let tilde = projection_dataset(x, fam, theta_star)?;
    project_on(&tilde, fam, config)
}

/// Extreme eigenvalues of the scaled restricted information
/// `n^{-1} X_S^T W(theta_S-projected) X_S` over every support with
/// `1 <= |S| <= k`. The per-observation curvature weight equals the
/// observed information for canonical links and the expected information
/// otherwise. Exhaustive, hence guarded at `p <= 15`.
pub fn restricted_eigenvalues(
    x: &DMatrix<f64>,
    fam: &GlmFamily,
    theta_star: &DVector<f64>,
    k: usize,
) -> Result<RestrictedEigenvalues> {
    let p = x.ncols();
    if p > SWEEP_MAX_P {
        return Err(Error::Unsupported(format!(
            "restricted-eigenvalue sweep is limited to p <= {SWEEP_MAX_P}, got p = {p}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput(
            "the restriction size k must be at least 1".into(),
        ));
    }
    let tilde = projection_dataset(x, fam, theta_star)?;
    let n = x.nrows() as f64;
    let supports: Vec<Vec<usize>> = (1..=k.min(p))
        .flat_map(|size| (1..=p).combinations(size))
        .collect();
    let extremes: Vec<(f64, f64)> = supports
        .par_iter()
        .map(|indices| -> Result<(f64, f64)> {
            let config = Configuration::new(indices.clone(), p)?;
            let projected = project_on(&tilde, fam, &config)?;
            let xs = tilde.column_subset(&config)?;
            let eta = &xs * &projected;
            let mut weighted = xs.clone();
            for i in 0..weighted.nrows() {
                let w = fam.weight(eta[i])?;
                weighted.row_mut(i).scale_mut(w);
            }
            let info = xs.tr_mul(&weighted) / n;
            let eigen = info.symmetric_eigen();
            let lo = eigen.eigenvalues.min();
            let hi = eigen.eigenvalues.max();
            Ok((lo, hi))
        })
        .collect::<Result<_>>()?;
    let lambda_min = extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let lambda_max = extremes
        .iter()
        .map(|e| e.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RestrictedEigenvalues {
        lambda_min,
        lambda_max,
    })
}

/// Checks whether the smallest squared active coefficient clears the
/// signal-strength threshold `c * s* * Lambda * log(p) / n`, where `s*`
/// counts the nonzero entries of `theta_star` and `Lambda` is the caller's
/// restricted-eigenvalue bound. Requires `c > 1`. A null vector satisfies
/// the condition vacuously with zero margin.
pub fn beta_min_check(
    theta_star: &DVector<f64>,
    n: usize,
    p: usize,
    lambda_at: f64,
    c: f64,
) -> BetaMinCheck {
    assert!(c > 1.0, "the beta-min constant c must exceed 1");
    let active: Vec<f64> = theta_star.iter().copied().filter(|&v| v != 0.0).collect();
    if active.is_empty() {
        return BetaMinCheck {
            satisfied: true,
            margin: 0.0,
        };
    }
    let s_star = active.len() as f64;
    let threshold = c * s_star * lambda_at * (p as f64).ln() / n as f64;
    let min_sq = active
        .iter()
        .map(|v| v * v)
        .fold(f64::INFINITY, f64::min);
    BetaMinCheck {
        satisfied: min_sq >= threshold,
        margin: min_sq - threshold,
    }
}

/// Smallest singular value of `n^{-1/2} W^{1/2} X_S` over every support
/// with `1 <= |S| <= s`. Exhaustive, hence guarded at `p <= 15`.
pub fn sparse_singular_value(x: &DMatrix<f64>, w_diag: &DVector<f64>, s: usize) -> Result<f64> {
    let (n, p) = x.shape();
    if p > SWEEP_MAX_P {
        return Err(Error::Unsupported(format!(
            "sparse-singular-value sweep is limited to p <= {SWEEP_MAX_P}, got p = {p}"
        )));
    }
    if s == 0 {
        return Err(Error::InvalidInput(
            "the sparsity level s must be at least 1".into(),
        ));
    }
    if w_diag.len() != n {
        return Err(Error::InvalidInput(format!(
            "weight vector length {} does not match the design's {} rows",
            w_diag.len(),
            n
        )));
    }
    if w_diag.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidInput(
            "weights must be nonnegative and finite".into(),
        ));
    }
    let mut scaled = x.clone();
    let root_n = (n as f64).sqrt();
    for i in 0..n {
        scaled.row_mut(i).scale_mut(w_diag[i].sqrt() / root_n);
    }
    let mut phi = f64::INFINITY;
    for size in 1..=s.min(p) {
        for indices in (0..p).combinations(size) {
            let sub = scaled.select_columns(indices.iter());
            let sigma = sub.svd(false, false).singular_values;
            phi = phi.min(sigma.min());
        }
    }
    Ok(phi)
}

/// Compares coefficient draws taken at the chain's visits to
/// `true_config` against the limiting Gaussian centered at the MLE with
/// covariance `rho * J^{-1}`: reports the normalized mean gap, the
/// relative Frobenius covariance gap, and `rho`. At least two retained
/// visits are required for the sample covariance to exist.
pub fn bvm_compare<R: Rng + ?Sized>(
    chain: &ChainResult,
    cache: &ScoreCache,
    true_config: &Configuration,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<BvmComparison> {
    let scored = cache
        .get(true_config)
        .ok_or_else(|| Error::MissingFit(true_config.clone()))?;
    let fit = scored
        .fit
        .as_ref()
        .ok_or_else(|| Error::MissingFit(true_config.clone()))?;
    let visits = chain
        .samples
        .iter()
        .filter(|s| *s == true_config)
        .count();
    if visits < 2 {
        return Err(Error::NeverVisited(true_config.clone()));
    }
    let s = true_config.len();
    let mut draws = DMatrix::zeros(s, visits);
    let mut column = 0;
    for sample in &chain.samples {
        if sample == true_config {
            let theta = conditional_posterior_draw(fit, hyper.alpha, hyper.gamma, rng);
            draws.set_column(column, &theta);
            column += 1;
        }
    }
    let mean = draws.column_mean();
    let mut centered = draws;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let sample_cov = &centered * centered.transpose() / (visits as f64 - 1.0);

    let rho = bvm_rho(hyper.alpha, hyper.gamma);
    let identity = DMatrix::identity(s, s);
    let l_inv = fit
        .info_chol
        .solve_lower_triangular(&identity)
        .expect("stored Cholesky factor is invertible");
    let target_cov = l_inv.tr_mul(&l_inv) * rho;

    let mle_norm = fit.theta_hat.norm();
    let mean_gap = if mle_norm > 0.0 {
        (mean - &fit.theta_hat).norm() / mle_norm
    } else {
        mean.norm()
    };
    let cov_gap = (sample_cov - &target_cov).norm() / target_cov.norm();
    Ok(BvmComparison {
        mean_gap,
        cov_gap,
        rho,
        draws: visits,
    })
}

/// Assembles the full diagnostic report for a finished chain against a
/// reference coefficient vector with at least one nonzero entry:
/// Hellinger distance between the truth and the chain's aggregated
/// estimate, the rate `epsilon_n = sqrt(s* log p / n)`, restricted
/// eigenvalues over supports of size at most `k`, the beta-min check with
/// constant `c` and `Lambda` taken from the sweep, the sparse singular
/// value at the truth's weights and sparsity, and the limiting-Gaussian
/// moment gaps at the truth's support.
#[allow(clippy::too_many_arguments)]
pub fn theory_report<R: Rng + ?Sized>(
    data: &Dataset,
    fam: &GlmFamily,
    theta_star: &DVector<f64>,
    hyper: &Hyperparameters,
    chain: &ChainResult,
    cache: &ScoreCache,
    k: usize,
    c: f64,
    rng: &mut R,
) -> Result<TheoryReport> {
    let (n, p) = (data.n(), data.p());
    check_theta_length(data.x(), theta_star, "theta_star")?;
    let active: Vec<usize> = theta_star
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, _)| j + 1)
        .collect();
    if active.is_empty() {
        return Err(Error::InvalidInput(
            "the diagnostic report needs at least one nonzero reference coefficient".into(),
        ));
    }
    let s_star = active.len();
    let epsilon_n = (s_star as f64 * (p as f64).ln() / n as f64).sqrt();

    let estimates = DVector::from_vec(estimate_coefficients(chain, cache, p)?);
    let hellinger = hellinger_distance(data.x(), fam, theta_star, &estimates)?;

    let eig = restricted_eigenvalues(data.x(), fam, theta_star, k)?;
    let beta_min = beta_min_check(theta_star, n, p, eig.lambda_max, c);

    let lp_star = data.x() * theta_star;
    let mut w = DVector::zeros(n);
    for i in 0..n {
        w[i] = fam.weight(lp_star[i])?;
    }
    let phi_sparse = sparse_singular_value(data.x(), &w, s_star)?;

    let true_config = Configuration::new(active, p)?;
    let bvm = bvm_compare(chain, cache, &true_config, hyper, rng)?;

    Ok(TheoryReport {
        hellinger,
        epsilon_n,
        lambda_min_restricted: eig.lambda_min,
        lambda_max_restricted: eig.lambda_max,
        beta_min_satisfied: beta_min.satisfied,
        beta_min_margin: beta_min.margin,
        phi_sparse,
        bvm_mean_gap: bvm.mean_gap,
        bvm_cov_gap: bvm.cov_gap,
        rho: bvm.rho,
    })
}
