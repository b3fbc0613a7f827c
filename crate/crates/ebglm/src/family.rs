//! Response families and link functions.
//!
//! A model is specified by the density `p(y | eta) ∝ exp{y eta - b(eta)}`
//! together with a link mapping the linear predictor to the mean. The
//! canonical link makes the natural parameter equal the linear predictor;
//! the probit link (binary responses only) routes it through the standard
//! normal distribution function.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::{log1pexp, log_normal_cdf, normal_cdf};

/// Largest natural parameter at which the Poisson cumulant `e^eta` is still
/// comfortably representable in double precision.
pub const ETA_GUARD: f64 = 700.0;

const LN_SQRT_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Response distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "logistic", alias = "bernoulli")]
    Bernoulli,
    #[serde(rename = "poisson")]
    Poisson,
}

/// Link between the linear predictor and the natural parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Canonical,
    Probit,
}

/// Cumulant function and its first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyEval {
    pub b: f64,
    pub b_dot: f64,
    pub b_ddot: f64,
}

/// Per-observation log-likelihood contributions as functions of the linear
/// predictor: the value, its first derivative, and the negated second
/// derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsStats {
    pub loglik: f64,
    pub score: f64,
    pub neg_hess: f64,
}

/// A response family paired with a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GlmFamily {
    kind: FamilyKind,
    link: LinkKind,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GlmFamily {
    /// Pairs a family with a link. The probit link is only defined for
    /// binary responses.
    pub fn new(kind: FamilyKind, link: LinkKind) -> Result<Self> {
        if link == LinkKind::Probit && kind != FamilyKind::Bernoulli {
            return Err(Error::InvalidInput(
                "the probit link is only available for the bernoulli family".into(),
            ));
        }
        Ok(Self { kind, link })
    }

    /// Bernoulli responses with the canonical (logit) link.
    pub fn logistic() -> Self {
        Self {
            kind: FamilyKind::Bernoulli,
            link: LinkKind::Canonical,
        }
    }

    /// Poisson responses with the canonical (log) link.
    pub fn poisson() -> Self {
        Self {
            kind: FamilyKind::Poisson,
            link: LinkKind::Canonical,
        }
    }

    /// Bernoulli responses with the probit link.
    pub fn probit() -> Self {
        Self {
            kind: FamilyKind::Bernoulli,
            link: LinkKind::Probit,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn link(&self) -> LinkKind {
        self.link
    }

    /// Short name used in reports and file output.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.link) {
            (FamilyKind::Bernoulli, LinkKind::Canonical) => "logistic",
            (FamilyKind::Bernoulli, LinkKind::Probit) => "probit",
            (FamilyKind::Poisson, _) => "poisson",
        }
    }

    /// Evaluates the cumulant function and its first two derivatives at the
    /// natural parameter `eta`.
    ///
    /// Poisson evaluation fails once `eta` exceeds [`ETA_GUARD`] because
    /// `e^eta` leaves the double-precision range shortly after.
    pub fn eval(&self, eta: f64) -> Result<FamilyEval> {
        match self.kind {
            FamilyKind::Bernoulli => {
                let b_dot = sigmoid(eta);
                Ok(FamilyEval {
                    b: log1pexp(eta),
                    b_dot,
                    b_ddot: b_dot * sigmoid(-eta),
                })
            }
            FamilyKind::Poisson => {
                if eta > ETA_GUARD {
                    return Err(Error::Overflow {
                        eta,
                        guard: ETA_GUARD,
                    });
                }
                let e = eta.exp();
                Ok(FamilyEval {
                    b: e,
                    b_dot: e,
                    b_ddot: e,
                })
            }
        }
    }

    /// Natural parameter as a function of the linear predictor.
    pub fn natural_param(&self, lin_pred: f64) -> f64 {
        match self.link {
            LinkKind::Canonical => lin_pred,
            LinkKind::Probit => log_normal_cdf(lin_pred) - log_normal_cdf(-lin_pred),
        }
    }

    /// Mean response at a linear predictor value.
    pub fn mean(&self, lin_pred: f64) -> Result<f64> {
        match (self.kind, self.link) {
            (FamilyKind::Bernoulli, LinkKind::Canonical) => Ok(sigmoid(lin_pred)),
            (FamilyKind::Bernoulli, LinkKind::Probit) => Ok(normal_cdf(lin_pred)),
            (FamilyKind::Poisson, _) => Ok(self.eval(lin_pred)?.b_dot),
        }
    }

    /// Design weight `du/dl * dxi/dl` at a linear predictor value; for a
    /// canonical link this is the conditional variance `b''(l)`.
    pub fn weight(&self, lin_pred: f64) -> Result<f64> {
        match (self.kind, self.link) {
            (FamilyKind::Bernoulli, LinkKind::Canonical) => {
                Ok(sigmoid(lin_pred) * sigmoid(-lin_pred))
            }
            (FamilyKind::Bernoulli, LinkKind::Probit) => {
                let (r1, r0) = probit_ratios(lin_pred);
                Ok(r1 * r0)
            }
            (FamilyKind::Poisson, _) => Ok(self.eval(lin_pred)?.b_ddot),
        }
    }

    /// Log-likelihood contribution, its derivative, and the negated second
    /// derivative of a single observation with respect to the linear
    /// predictor. Normalizing constants are included, so values are
    /// comparable across configurations and families.
    ///
    /// Fractional `y` inside the family's mean range is accepted; that is
    /// what makes projections onto misspecified supports expressible with
    /// the same machinery.
    pub fn obs_stats(&self, y: f64, lin_pred: f64) -> Result<ObsStats> {
        match (self.kind, self.link) {
            (FamilyKind::Bernoulli, LinkKind::Canonical) => {
                let mu = sigmoid(lin_pred);
                Ok(ObsStats {
                    loglik: y * lin_pred - log1pexp(lin_pred),
                    score: y - mu,
                    neg_hess: mu * sigmoid(-lin_pred),
                })
            }
            (FamilyKind::Bernoulli, LinkKind::Probit) => {
                let lcdf_pos = log_normal_cdf(lin_pred);
                let lcdf_neg = log_normal_cdf(-lin_pred);
                let (r1, r0) = probit_ratios(lin_pred);
                Ok(ObsStats {
                    loglik: y * lcdf_pos + (1.0 - y) * lcdf_neg,
                    score: y * r1 - (1.0 - y) * r0,
                    neg_hess: y * r1 * (lin_pred + r1) + (1.0 - y) * r0 * (r0 - lin_pred),
                })
            }
            (FamilyKind::Poisson, _) => {
                if lin_pred > ETA_GUARD {
                    return Err(Error::Overflow {
                        eta: lin_pred,
                        guard: ETA_GUARD,
                    });
                }
                let rate = lin_pred.exp();
                Ok(ObsStats {
                    loglik: y * lin_pred - rate - ln_gamma(y + 1.0),
                    score: y - rate,
                    neg_hess: rate,
                })
            }
        }
    }

    /// Log density of one observation at a linear predictor value.
    pub fn log_density(&self, y: f64, lin_pred: f64) -> Result<f64> {
        Ok(self.obs_stats(y, lin_pred)?.loglik)
    }

    /// Draws one response at a linear predictor value.
    pub fn draw<R: Rng + ?Sized>(&self, lin_pred: f64, rng: &mut R) -> Result<f64> {
        match self.kind {
            FamilyKind::Bernoulli => {
                let mu = self.mean(lin_pred)?;
                Ok(if rng.gen::<f64>() < mu { 1.0 } else { 0.0 })
            }
            FamilyKind::Poisson => {
                let rate = self.mean(lin_pred)?;
                if rate == 0.0 {
                    return Ok(0.0);
                }
                let dist = rand_distr::Poisson::new(rate).map_err(|_| Error::Overflow {
                    eta: lin_pred,
                    guard: ETA_GUARD,
                })?;
                Ok(dist.sample(rng))
            }
        }
    }

    /// Whether a response value lies in the family's support.
    pub fn valid_response(&self, y: f64) -> bool {
        match self.kind {
            FamilyKind::Bernoulli => y == 0.0 || y == 1.0,
            FamilyKind::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        }
    }
}

/// Stable inverse Mills ratios `phi/Phi(l)` and `phi/Phi(-l)`, the building
/// blocks of every probit derivative.
fn probit_ratios(lin_pred: f64) -> (f64, f64) {
    let log_pdf = -0.5 * lin_pred * lin_pred - LN_SQRT_TWO_PI;
    let r1 = (log_pdf - log_normal_cdf(lin_pred)).exp();
    let r0 = (log_pdf - log_normal_cdf(-lin_pred)).exp();
    (r1, r0)
}
