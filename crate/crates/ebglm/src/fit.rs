//! Maximum-likelihood fitting of a GLM restricted to a configuration.
//!
//! The solver is a damped Newton iteration: at each step the candidate
//! update is halved until the log-likelihood increases, and every iterate is
//! clamped into a coefficient box so that separated or otherwise degenerate
//! problems terminate at a well-defined boundary point instead of diverging.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{Configuration, Dataset};
use crate::error::{Error, Result};
use crate::family::GlmFamily;

/// Multiplier for the trace-scaled diagonal ridge applied to the
/// information matrix before factorization. The reported information is
/// never ridged.
const RIDGE_FACTOR: f64 = 1e-10;

/// Knobs of the Newton solver. The defaults are used everywhere in the
/// pipeline; they are exposed for experiments and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Iteration cap before declaring non-convergence.
    pub max_iter: usize,
    /// Convergence once the score norm drops below `tol_factor * n`.
    pub tol_factor: f64,
    /// Coefficient box half-width; iterates are clamped to it.
    pub box_bound: f64,
    /// Maximum number of step halvings within one Newton iteration.
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol_factor: 1e-8,
            box_bound: 30.0,
            max_halvings: 30,
        }
    }
}

/// A fitted restricted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub config: Configuration,
    /// Maximizer of the restricted log-likelihood, length `|S|`.
    pub theta_hat: DVector<f64>,
    /// Log-likelihood at `theta_hat`, normalizing constants included.
    pub loglik_hat: f64,
    /// Observed information `X_S^T W X_S` at `theta_hat`, without ridge.
    pub info: DMatrix<f64>,
    /// Lower Cholesky factor of the ridged information matrix.
    pub info_chol: DMatrix<f64>,
    /// Whether the score norm reached the tolerance.
    pub converged: bool,
    /// Whether any coefficient sits on the box boundary.
    pub degenerate: bool,
    /// Number of Newton updates taken.
    pub iterations: usize,
}

/// Log-likelihood of the restricted model at `theta` (length `|S|`).
pub fn log_likelihood(
    data: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
    theta: &DVector<f64>,
) -> Result<f64> {
    let xs = data.column_subset(config)?;
    check_dim(config, theta)?;
    let lp = &xs * theta;
    let mut total = 0.0;
    for i in 0..data.n() {
        total += fam.obs_stats(data.y()[i], lp[i])?.loglik;
    }
    Ok(total)
}

/// Score (gradient of the log-likelihood) of the restricted model.
pub fn score(
    data: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let xs = data.column_subset(config)?;
    check_dim(config, theta)?;
    Ok(evaluate(&xs, data.y(), fam, theta)?.1)
}

/// Observed information (negated log-likelihood Hessian) of the restricted
/// model. Rank deficiency is not an error here; it surfaces as a failed
/// factorization wherever the matrix is next decomposed.
pub fn observed_information(
    data: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let xs = data.column_subset(config)?;
    check_dim(config, theta)?;
    Ok(evaluate(&xs, data.y(), fam, theta)?.2)
}

/// Fits the restricted MLE with default solver options.
pub fn fit_mle(data: &Dataset, fam: &GlmFamily, config: &Configuration) -> Result<FitResult> {
    fit_mle_with(data, fam, config, &SolverOptions::default())
}

/// Fits the restricted MLE.
///
/// Starts at zero, takes ridged Newton steps with step halving, and clamps
/// every iterate into the coefficient box. A fit that stalls or converges
/// on the boundary is returned with `degenerate = true`; a fit that stalls
/// in the interior is a non-convergence error.
pub fn fit_mle_with(
    data: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let s = config.len();
    if s > data.n() {
        return Err(Error::InvalidInput(format!(
            "configuration {config} has more coefficients than the {} observations",
            data.n()
        )));
    }
    let xs = data.column_subset(config)?;
    if numerical_rank(&xs) < s {
        return Err(Error::SingularInformation(config.clone()));
    }
    let y = data.y();

    let mut theta = DVector::zeros(s);
    let (mut loglik, mut grad, mut info) = evaluate(&xs, y, fam, &theta)?;
    let tol = opts.tol_factor * data.n() as f64;
    let mut iterations = 0;
    let mut converged = grad.norm() < tol;

    while !converged && iterations < opts.max_iter {
        let chol = ridged_cholesky(&info, config)?;
        let direction = chol.solve(&grad);
        let mut moved = false;
        let mut step = 1.0;
        for _ in 0..=opts.max_halvings {
            let mut candidate = &theta + &direction * step;
            candidate.apply(|v| *v = v.clamp(-opts.box_bound, opts.box_bound));
            if candidate == theta {
                // Clamping removed the whole update: the iterate is pinned
                // to the boundary along every direction that matters.
                break;
            }
            match evaluate(&xs, y, fam, &candidate) {
                Ok((cand_ll, cand_grad, cand_info)) if cand_ll > loglik => {
                    theta = candidate;
                    loglik = cand_ll;
                    grad = cand_grad;
                    info = cand_info;
                    moved = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !moved {
            break;
        }
        iterations += 1;
        converged = grad.norm() < tol;
    }

    let degenerate = theta
        .iter()
        .any(|v| v.abs() >= opts.box_bound - 1e-9 * opts.box_bound);
    if !converged && !degenerate {
        return Err(Error::NonConvergence {
            config: config.clone(),
            iterations,
            score_norm: grad.norm(),
        });
    }
    let info_chol = ridged_cholesky(&info, config)?.unpack();
    Ok(FitResult {
        config: config.clone(),
        theta_hat: theta,
        loglik_hat: loglik,
        info,
        info_chol,
        converged,
        degenerate,
        iterations,
    })
}

fn check_dim(config: &Configuration, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != config.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient vector of length {} does not match configuration {config}",
            theta.len()
        )));
    }
    Ok(())
}

/// One pass over the observations: log-likelihood, score, and observed
/// information of the restricted model at `theta`.
fn evaluate(
    xs: &DMatrix<f64>,
    y: &DVector<f64>,
    fam: &GlmFamily,
    theta: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = xs.nrows();
    let lp = xs * theta;
    let mut loglik = 0.0;
    let mut residual = DVector::zeros(n);
    let mut weighted = xs.clone();
    for i in 0..n {
        let stats = fam.obs_stats(y[i], lp[i])?;
        loglik += stats.loglik;
        residual[i] = stats.score;
        weighted.row_mut(i).scale_mut(stats.neg_hess);
    }
    let grad = xs.tr_mul(&residual);
    let info = xs.tr_mul(&weighted);
    Ok((loglik, grad, info))
}

fn ridged_cholesky(info: &DMatrix<f64>, config: &Configuration) -> Result<Cholesky<f64, Dyn>> {
    let s = info.nrows();
    let mut ridged = info.clone();
    let ridge = RIDGE_FACTOR * ridged.trace() / s as f64;
    for d in 0..s {
        ridged[(d, d)] += ridge;
    }
    Cholesky::new(ridged).ok_or_else(|| Error::SingularInformation(config.clone()))
}

/// Column rank of a dense matrix by singular value thresholding.
fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let largest = svd.singular_values.max();
    if largest <= 0.0 {
        return 0;
    }
    let tol = largest * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|&&v| v > tol).count()
}
