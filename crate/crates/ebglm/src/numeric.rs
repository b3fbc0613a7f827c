//! Small numerical building blocks shared across the crate: stable
//! log-domain primitives, binomial coefficients, normal tail functions, and
//! a Gauss-Hermite rule built from the Jacobi matrix.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;

/// Evaluates `ln(1 + e^x)` without overflow or cancellation.
///
/// The branch cutoffs follow the standard accurate evaluation scheme for
/// this function in double precision.
pub fn log1pexp(x: f64) -> f64 {
    if x <= -37.0 {
        x.exp()
    } else if x <= 18.0 {
        x.exp().ln_1p()
    } else if x <= 33.3 {
        x + (-x).exp()
    } else {
        x
    }
}

/// Evaluates `ln(sum_i e^{x_i})` with the usual max shift.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Natural log of the binomial coefficient `C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "ln_binomial requires k <= n");
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_TWO_PI
}

/// Standard normal distribution function via the complementary error
/// function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Phi(x)`, stable into the far left tail.
///
/// Below `x = -10` the direct form underflows long before the log does, so
/// the tail uses the Mills ratio expansion
/// `Phi(-t) = phi(t)/t * (1 - 1/t^2 + 3/t^4 - 15/t^6 + 105/t^8 + ...)`.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x >= -10.0 {
        normal_cdf(x).ln()
    } else {
        let t2 = x * x;
        let series = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2)
            + 105.0 / (t2 * t2 * t2 * t2);
        -0.5 * t2 - SQRT_TWO_PI.ln() - (-x).ln() + series.ln()
    }
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the weight
/// function `e^{-x^2}`, so that `integral f(x) e^{-x^2} dx ~= sum_k w_k f(x_k)`.
///
/// Built by the Golub-Welsch procedure: the nodes are the eigenvalues of the
/// symmetric tridiagonal Jacobi matrix with off-diagonal entries
/// `sqrt(k/2)`, and each weight is `sqrt(pi)` times the squared first
/// component of the corresponding normalized eigenvector. Nodes are returned
/// in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_hermite requires at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eigen = jacobi.symmetric_eigen();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eigen.eigenvectors[(0, i)];
            (eigen.eigenvalues[i], sqrt_pi * first * first)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule.into_iter().unzip()
}
