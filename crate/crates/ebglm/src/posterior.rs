//! Scoring of configurations under the fractional posterior.
//!
//! The unnormalized log posterior mass of a configuration combines the
//! complexity prior with a Laplace approximation of the fractional marginal
//! likelihood. A small adaptive Gauss-Hermite quadrature provides an
//! independent check of that approximation, and exact enumeration of the
//! model space is available at small scale as an oracle for the sampler.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use itertools::Itertools;
use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::data::{Configuration, Dataset};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::fit::{fit_mle, FitResult};
use crate::numeric::{gauss_hermite, log_sum_exp};
use crate::prior::{gaussian_draw_scaled, log_config_prior, Hyperparameters};

/// Exact enumeration and the quadrature oracle are exponential in their
/// arguments; these caps keep them in oracle territory.
pub const ENUMERATION_MAX_P: usize = 15;
pub const ENUMERATION_MAX_S: usize = 4;
pub const QUADRATURE_MAX_DIM: usize = 3;
const QUADRATURE_NODES: usize = 64;

/// Posterior weight retained by the Gaussian coefficient posterior within a
/// configuration: `rho = gamma / (1 + alpha * gamma)`.
pub fn bvm_rho(alpha: f64, gamma: f64) -> f64 {
    gamma / (1.0 + alpha * gamma)
}

/// Laplace approximation of the log fractional marginal likelihood of a
/// fitted configuration: `-(|S|/2) ln(1 + alpha gamma) + alpha * loglik_hat`.
pub fn log_marginal_laplace(fit: &FitResult, alpha: f64, gamma: f64) -> f64 {
    let s = fit.config.len() as f64;
    -0.5 * s * (alpha * gamma).ln_1p() + alpha * fit.loglik_hat
}

/// A scored configuration. A failed fit keeps `fit = None` and scores
/// negative infinity, as does any configuration outside the prior support.
#[derive(Debug, Clone)]
pub struct ConfigScore {
    pub config: Configuration,
    /// Unnormalized log posterior mass.
    pub log_score: f64,
    pub fit: Option<Arc<FitResult>>,
}

/// Concurrent memo of configuration scores keyed by configuration.
///
/// Scores are pure functions of the dataset and hyperparameters, so two
/// threads racing on the same key compute identical values; the first
/// insert wins and the duplicate work is only a performance loss, recorded
/// by the fit counter.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: DashMap<Configuration, ConfigScore>,
    fits: AtomicUsize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of configurations scored so far.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of Newton solves performed; can exceed `len` under
    /// contention because racing computations are not serialized.
    pub fn fit_count(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    /// Cached score, if present.
    pub fn get(&self, config: &Configuration) -> Option<ConfigScore> {
        self.map.get(config).map(|entry| entry.clone())
    }

    /// Every configuration scored so far, in sorted order.
    pub fn configurations(&self) -> Vec<Configuration> {
        let mut out: Vec<Configuration> =
            self.map.iter().map(|entry| entry.key().clone()).collect();
        out.sort();
        out
    }
}

/// Scores a configuration against the fractional posterior, consulting and
/// filling `cache`.
///
/// Oversized configurations score negative infinity without being fitted
/// or cached; fit failures (singular information, non-convergence,
/// irrecoverable overflow) are cached as negative infinity so the sampler
/// never retries them.
pub fn score_configuration(
    data: &Dataset,
    fam: &GlmFamily,
    config: &Configuration,
    hyper: &Hyperparameters,
    cache: &ScoreCache,
) -> ConfigScore {
    let size = config.len();
    if size > hyper.s_max {
        return ConfigScore {
            config: config.clone(),
            log_score: f64::NEG_INFINITY,
            fit: None,
        };
    }
    if let Some(hit) = cache.get(config) {
        return hit;
    }
    let prior = log_config_prior(data.p(), size, hyper.beta, hyper.s_max);
    let scored = match fit_mle(data, fam, config) {
        Ok(fit) => {
            let log_score = prior + log_marginal_laplace(&fit, hyper.alpha, hyper.gamma);
            ConfigScore {
                config: config.clone(),
                log_score,
                fit: Some(Arc::new(fit)),
            }
        }
        Err(_) => ConfigScore {
            config: config.clone(),
            log_score: f64::NEG_INFINITY,
            fit: None,
        },
    };
    cache.fits.fetch_add(1, Ordering::Relaxed);
    cache
        .map
        .entry(config.clone())
        .or_insert(scored)
        .clone()
}

/// Log fractional marginal likelihood by adaptive Gauss-Hermite quadrature
/// with 64 nodes per axis, exact for the Gaussian prior factor.
///
/// This is an oracle for [`log_marginal_laplace`]; it is exponential in the
/// configuration size and therefore limited to `|S| <=` 3.
pub fn log_marginal_quadrature(
    data: &Dataset,
    fam: &GlmFamily,
    fit: &FitResult,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    log_marginal_quadrature_with_nodes(data, fam, fit, alpha, gamma, QUADRATURE_NODES)
}

/// Same as [`log_marginal_quadrature`] with an explicit per-axis node
/// count, used to check self-consistency under node refinement.
pub fn log_marginal_quadrature_with_nodes(
    data: &Dataset,
    fam: &GlmFamily,
    fit: &FitResult,
    alpha: f64,
    gamma: f64,
    nodes: usize,
) -> Result<f64> {
    let s = fit.config.len();
    if s > QUADRATURE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature is limited to configurations of size {QUADRATURE_MAX_DIM}, got {s}"
        )));
    }
    let xs = data.column_subset(&fit.config)?;
    let y = data.y();
    let loglik_at = |theta: &DVector<f64>| -> Result<f64> {
        let lp = &xs * theta;
        let mut total = 0.0;
        for i in 0..y.len() {
            total += fam.obs_stats(y[i], lp[i])?.loglik;
        }
        Ok(total)
    };

    // Substituting theta = theta_hat + sqrt(2 gamma) L^{-T} u turns the
    // prior-weighted integral into integral pi^{-s/2} e^{alpha(l(theta(u)) -
    // l(theta_hat))} e^{-|u|^2} du around the fitted maximum.
    let (grid, weights) = gauss_hermite(nodes);
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let spread = (2.0 * gamma).sqrt();
    let mut terms = Vec::with_capacity(nodes.pow(s as u32));
    let mut index = vec![0usize; s];
    loop {
        let u = DVector::from_fn(s, |k, _| grid[index[k]]);
        let offset = fit
            .info_chol
            .tr_solve_lower_triangular(&u)
            .expect("Cholesky factor has a positive diagonal");
        let theta = &fit.theta_hat + offset * spread;
        let log_weight: f64 = index.iter().map(|&k| log_weights[k]).sum();
        let term = match loglik_at(&theta) {
            Ok(ll) => log_weight + alpha * (ll - fit.loglik_hat),
            // A node beyond the overflow guard carries no mass.
            Err(Error::Overflow { .. }) => f64::NEG_INFINITY,
            Err(other) => return Err(other),
        };
        terms.push(term);

        let mut axis = 0;
        loop {
            if axis == s {
                return Ok(alpha * fit.loglik_hat - 0.5 * s as f64 * std::f64::consts::PI.ln()
                    + log_sum_exp(&terms));
            }
            index[axis] += 1;
            if index[axis] < nodes {
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
    }
}

/// One posterior entry of an exact enumeration.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorEntry {
    #[serde(rename = "indices")]
    pub config: Configuration,
    pub probability: f64,
}

/// The exactly normalized posterior over every configuration of size 1
/// through `s_max`.
#[derive(Debug, Clone, Serialize)]
pub struct EnumeratedPosterior {
    /// Entries ordered by size, then lexicographically.
    pub entries: Vec<PosteriorEntry>,
    /// Log normalizing constant of the raw scores.
    pub normalizer: f64,
}

impl EnumeratedPosterior {
    /// Posterior probability of a configuration; zero when outside the
    /// enumerated support.
    pub fn probability(&self, config: &Configuration) -> f64 {
        self.entries
            .iter()
            .find(|e| &e.config == config)
            .map_or(0.0, |e| e.probability)
    }

    /// Marginal inclusion probability of every column, 1-based positions
    /// stored at 0-based offsets.
    pub fn inclusion_probabilities(&self, p: usize) -> Vec<f64> {
        let mut incl = vec![0.0; p];
        for entry in &self.entries {
            for &j in entry.config.indices() {
                incl[j - 1] += entry.probability;
            }
        }
        incl
    }
}

/// Scores every configuration up to the size cap and normalizes exactly.
///
/// Guarded to `p <=` 15 and `s_max <=` 4; beyond that the model space is no
/// longer enumerable in reasonable time.
pub fn enumerate_posterior(
    data: &Dataset,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
) -> Result<EnumeratedPosterior> {
    hyper.validate(data.n(), data.p())?;
    if data.p() > ENUMERATION_MAX_P || hyper.s_max > ENUMERATION_MAX_S {
        return Err(Error::Unsupported(format!(
            "exact enumeration requires p <= {ENUMERATION_MAX_P} and s_max <= {ENUMERATION_MAX_S}, \
             got p = {} and s_max = {}",
            data.p(),
            hyper.s_max
        )));
    }
    let cache = ScoreCache::new();
    let mut configs = Vec::new();
    for size in 1..=hyper.s_max.min(data.p()) {
        for combo in (1..=data.p()).combinations(size) {
            configs.push(Configuration::new(combo, data.p())?);
        }
    }
    let scores: Vec<f64> = configs
        .iter()
        .map(|c| score_configuration(data, fam, c, hyper, &cache).log_score)
        .collect();
    let normalizer = log_sum_exp(&scores);
    if normalizer == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(
            "no configuration received positive posterior mass".into(),
        ));
    }
    let entries = configs
        .into_iter()
        .zip(scores)
        .map(|(config, score)| PosteriorEntry {
            config,
            probability: (score - normalizer).exp(),
        })
        .collect();
    Ok(EnumeratedPosterior {
        entries,
        normalizer,
    })
}

/// One draw from the within-configuration coefficient posterior
/// `N(theta_hat, rho * J^{-1})` with `rho = gamma / (1 + alpha gamma)`.
pub fn conditional_posterior_draw<R: Rng + ?Sized>(
    fit: &FitResult,
    alpha: f64,
    gamma: f64,
    rng: &mut R,
) -> DVector<f64> {
    gaussian_draw_scaled(
        &fit.info_chol,
        &fit.theta_hat,
        bvm_rho(alpha, gamma),
        rng,
    )
}
