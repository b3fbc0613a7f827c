//! Metropolis-Hastings over configuration space and the summaries built
//! from its samples: inclusion probabilities, thresholded selection,
//! MLE-aggregation coefficient estimates, posterior predictive draws, and a
//! greedier shotgun-style neighborhood search.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::data::{Configuration, Dataset};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::numeric::log_sum_exp;
use crate::posterior::{conditional_posterior_draw, score_configuration, ConfigScore, ScoreCache};
use crate::prior::Hyperparameters;

/// The outcome of a configuration-space sampling run.
#[derive(Debug, Clone)]
pub struct ChainResult {
    /// Retained states, one per post-burn-in step, repeats included.
    pub samples: Vec<Configuration>,
    /// Every in-support configuration this run scored, sorted.
    pub visited: Vec<Configuration>,
    /// Fraction of steps (burn-in included) that moved to a new state.
    pub acceptance_rate: f64,
    /// Deterministic screening start state.
    pub initial_config: Configuration,
    /// Echo of the hyperparameters the run used.
    pub hyper: Hyperparameters,
}

/// Selection summary over one chain.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    /// Per-column inclusion frequency, length `p`.
    pub inclusion: Vec<f64>,
    /// Columns whose inclusion strictly exceeds the threshold; may be empty.
    pub selected: Vec<usize>,
    pub threshold: f64,
    /// Aggregated coefficient estimates, length `p`.
    pub estimates: Vec<f64>,
    /// Optional predictive draws, rows = new observations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_draws: Option<Vec<Vec<f64>>>,
}

/// Uniformly toggles one of the `p` column indices in `current`. The
/// result may be empty or oversized; the acceptance step treats such
/// proposals as zero-mass.
pub fn propose_flip<R: Rng + ?Sized>(
    current: &Configuration,
    p: usize,
    rng: &mut R,
) -> Vec<usize> {
    let j = rng.gen_range(1..=p);
    current.toggled(j)
}

/// One Metropolis-Hastings step from `current`, which must already carry
/// its score. Zero-mass proposals (empty, oversized, or failed fits) are
/// always rejected, so the chain never leaves the prior's support.
pub fn mh_step<R: Rng + ?Sized>(
    current: &ConfigScore,
    data: &Dataset,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
    cache: &ScoreCache,
    rng: &mut R,
) -> ConfigScore {
    step_detail(current, data, fam, hyper, cache, rng).0
}

/// Step plus bookkeeping: the next state, whether the proposal was
/// accepted, and the proposal's configuration when it was admissible
/// enough to be scored.
fn step_detail<R: Rng + ?Sized>(
    current: &ConfigScore,
    data: &Dataset,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
    cache: &ScoreCache,
    rng: &mut R,
) -> (ConfigScore, bool, Option<Configuration>) {
    let indices = propose_flip(&current.config, data.p(), rng);
    if indices.is_empty() || indices.len() > hyper.s_max {
        return (current.clone(), false, None);
    }
    let proposal_config = Configuration::new(indices, data.p())
        .expect("a flip of a valid configuration stays valid");
    let proposal = score_configuration(data, fam, &proposal_config, hyper, cache);
    let delta = proposal.log_score - current.log_score;
    // `delta` is NaN only when both scores are -inf; the comparison chain
    // rejects that case, keeping the chain in place.
    let accept = delta > 0.0 || rng.gen::<f64>().ln() < delta;
    if accept {
        (proposal, true, Some(proposal_config))
    } else {
        (current.clone(), false, Some(proposal_config))
    }
}

/// Deterministic start state: the singleton holding the column with the
/// largest absolute score component at theta = 0, ties broken toward the
/// smallest index.
fn screening_start(data: &Dataset, fam: &GlmFamily) -> Result<Configuration> {
    let mu0 = fam.mean(0.0)?;
    let residual = data.y().map(|y| y - mu0);
    let null_score = data.x().tr_mul(&residual);
    let mut best = 0usize;
    for j in 1..data.p() {
        if null_score[j].abs() > null_score[best].abs() {
            best = j;
        }
    }
    Ok(Configuration::singleton(best + 1))
}

/// Runs the Metropolis-Hastings chain: `ceil(samples / (1 - burnin))`
/// total steps, of which the last `samples` states are retained.
///
/// Fits are memoized in `cache`, which may be shared with other chains and
/// is the lookup table for every downstream summary of this chain.
pub fn run_chain<R: Rng + ?Sized>(
    data: &Dataset,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
    cache: &ScoreCache,
    rng: &mut R,
) -> Result<ChainResult> {
    hyper.validate(data.n(), data.p())?;
    let retained = hyper.samples;
    let total = (retained as f64 / (1.0 - hyper.burnin)).ceil() as usize;
    let initial_config = screening_start(data, fam)?;
    let mut visited: HashSet<Configuration> = HashSet::new();
    visited.insert(initial_config.clone());
    let mut current = score_configuration(data, fam, &initial_config, hyper, cache);

    let mut samples = Vec::with_capacity(retained);
    let mut accepted = 0usize;
    for step in 0..total {
        let (next, moved, scored) = step_detail(&current, data, fam, hyper, cache, rng);
        if let Some(config) = scored {
            visited.insert(config);
        }
        if moved {
            accepted += 1;
        }
        current = next;
        if total - step <= retained {
            samples.push(current.config.clone());
        }
    }

    let mut visited: Vec<Configuration> = visited.into_iter().collect();
    visited.sort();
    Ok(ChainResult {
        samples,
        visited,
        acceptance_rate: accepted as f64 / total as f64,
        initial_config,
        hyper: hyper.clone(),
    })
}

/// Per-column empirical inclusion frequency over the retained samples.
pub fn inclusion_probabilities(chain: &ChainResult, p: usize) -> Vec<f64> {
    let mut counts = vec![0usize; p];
    for sample in &chain.samples {
        for &j in sample.indices() {
            counts[j - 1] += 1;
        }
    }
    let m = chain.samples.len() as f64;
    counts.iter().map(|&c| c as f64 / m).collect()
}

/// Columns whose inclusion probability strictly exceeds `t` (1-based);
/// possibly empty.
pub fn select(inclusion: &[f64], t: f64) -> Vec<usize> {
    assert!(t > 0.0 && t < 1.0, "threshold must lie strictly in (0,1)");
    inclusion
        .iter()
        .enumerate()
        .filter(|(_, &pi)| pi > t)
        .map(|(idx, _)| idx + 1)
        .collect()
}

/// Aggregated coefficient estimates: the average over retained samples of
/// each configuration's MLE coordinates, zero for columns absent from a
/// sample.
pub fn estimate_coefficients(
    chain: &ChainResult,
    cache: &ScoreCache,
    p: usize,
) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; p];
    for sample in &chain.samples {
        let scored = cache
            .get(sample)
            .ok_or_else(|| Error::MissingFit(sample.clone()))?;
        let fit = scored
            .fit
            .as_ref()
            .ok_or_else(|| Error::MissingFit(sample.clone()))?;
        for (k, &j) in sample.indices().iter().enumerate() {
            totals[j - 1] += fit.theta_hat[k];
        }
    }
    let m = chain.samples.len() as f64;
    for t in totals.iter_mut() {
        *t /= m;
    }
    Ok(totals)
}

/// Posterior predictive draws at new design rows: one response draw per
/// retained sample, via the within-configuration Gaussian coefficient
/// posterior. Returns a matrix with `new_x.nrows()` rows and one column
/// per retained sample.
pub fn predict<R: Rng + ?Sized>(
    chain: &ChainResult,
    cache: &ScoreCache,
    fam: &GlmFamily,
    new_x: &DMatrix<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n_new = new_x.nrows();
    let mut draws = DMatrix::zeros(n_new, chain.samples.len());
    for (m, sample) in chain.samples.iter().enumerate() {
        if *sample.indices().last().unwrap() > new_x.ncols() {
            return Err(Error::InvalidInput(format!(
                "new design has {} columns but sampled configuration {sample} needs more",
                new_x.ncols()
            )));
        }
        let scored = cache
            .get(sample)
            .ok_or_else(|| Error::MissingFit(sample.clone()))?;
        let fit = scored
            .fit
            .as_ref()
            .ok_or_else(|| Error::MissingFit(sample.clone()))?;
        let theta = conditional_posterior_draw(fit, hyper.alpha, hyper.gamma, rng);
        for i in 0..n_new {
            let mut lp = 0.0;
            for (k, &j) in sample.indices().iter().enumerate() {
                lp += new_x[(i, j - 1)] * theta[k];
            }
            draws[(i, m)] = fam.draw(lp, rng)?;
        }
    }
    Ok(draws)
}

/// Shotgun-style stochastic search: at each iteration every admissible
/// single-flip neighbor is scored and the next state is sampled with
/// probability proportional to its posterior mass. Greedier than the
/// Metropolis chain; the trajectory has length `iterations` and the echoed
/// hyperparameters carry that length in their `samples` field.
pub fn sss_search<R: Rng + ?Sized>(
    data: &Dataset,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
    cache: &ScoreCache,
    rng: &mut R,
    iterations: usize,
) -> Result<ChainResult> {
    hyper.validate(data.n(), data.p())?;
    let initial_config = screening_start(data, fam)?;
    let mut visited: HashSet<Configuration> = HashSet::new();
    visited.insert(initial_config.clone());
    let mut current = score_configuration(data, fam, &initial_config, hyper, cache);
    let mut samples = Vec::with_capacity(iterations);
    let mut moves = 0usize;

    for _ in 0..iterations {
        let mut neighbors = Vec::with_capacity(data.p());
        for j in 1..=data.p() {
            let indices = current.config.toggled(j);
            if indices.is_empty() || indices.len() > hyper.s_max {
                continue;
            }
            let config = Configuration::new(indices, data.p())
                .expect("a flip of a valid configuration stays valid");
            let scored = score_configuration(data, fam, &config, hyper, cache);
            visited.insert(config);
            neighbors.push(scored);
        }
        let weights: Vec<f64> = neighbors.iter().map(|n| n.log_score).collect();
        let normalizer = log_sum_exp(&weights);
        if normalizer == f64::NEG_INFINITY {
            // Nowhere to go; record the current state again.
            samples.push(current.config.clone());
            continue;
        }
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = neighbors.len() - 1;
        for (idx, w) in weights.iter().enumerate() {
            cumulative += (w - normalizer).exp();
            if u < cumulative {
                chosen = idx;
                break;
            }
        }
        current = neighbors.swap_remove(chosen);
        moves += 1;
        samples.push(current.config.clone());
    }

    let mut visited: Vec<Configuration> = visited.into_iter().collect();
    visited.sort();
    let mut echo = hyper.clone();
    echo.samples = iterations;
    Ok(ChainResult {
        samples,
        visited,
        acceptance_rate: if iterations == 0 {
            0.0
        } else {
            moves as f64 / iterations as f64
        },
        initial_config,
        hyper: echo,
    })
}

/// Builds the selection summary for a finished chain.
pub fn selection_report(
    chain: &ChainResult,
    cache: &ScoreCache,
    p: usize,
    threshold: f64,
) -> Result<SelectionReport> {
    let inclusion = inclusion_probabilities(chain, p);
    let selected = select(&inclusion, threshold);
    let estimates = estimate_coefficients(chain, cache, p)?;
    Ok(SelectionReport {
        inclusion,
        selected,
        threshold,
        estimates,
        prediction_draws: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::enumerate_posterior;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn instance(fam: &GlmFamily, n: usize, p: usize, seed: u64, signal: &[f64]) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let mut theta = DVector::zeros(p);
        for (j, v) in signal.iter().enumerate() {
            theta[j] = *v;
        }
        let lp = &x * &theta;
        let y = DVector::from_fn(n, |i, _| fam.draw(lp[i], &mut rng).unwrap());
        Dataset::new(x, y, vec![], fam).unwrap()
    }

    #[test]
    fn flip_of_a_lone_index_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let proposal = propose_flip(&Configuration::singleton(1), 1, &mut rng);
        assert!(proposal.is_empty());
    }

    #[test]
    fn flips_are_uniform_over_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let current = Configuration::new(vec![2, 5], 10).unwrap();
        let p = 10;
        let trials = 100_000;
        let mut counts = vec![0usize; p];
        for _ in 0..trials {
            let proposal = propose_flip(&current, p, &mut rng);
            // Recover which index was toggled.
            let toggled = (1..=p)
                .find(|&j| current.contains(j) != proposal.contains(&j))
                .unwrap();
            counts[toggled - 1] += 1;
        }
        let expected = trials as f64 / p as f64;
        let se = (trials as f64 * (1.0 / p as f64) * (1.0 - 1.0 / p as f64)).sqrt();
        for (j, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 3.0 * se,
                "index {} flipped {} times, expected {expected}",
                j + 1,
                c
            );
        }
    }

    proptest! {
        #[test]
        fn flips_differ_in_exactly_one_index(
            p in 2usize..12,
            raw in proptest::collection::btree_set(1usize..12, 1..6),
            seed in 0u64..1000,
        ) {
            let indices: Vec<usize> = raw.into_iter().filter(|&j| j <= p).collect();
            prop_assume!(!indices.is_empty());
            let current = Configuration::new(indices, p).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let proposal = propose_flip(&current, p, &mut rng);
            let differing = (1..=p)
                .filter(|&j| current.contains(j) != proposal.contains(&j))
                .count();
            prop_assert_eq!(differing, 1);
        }
    }

    #[test]
    fn zero_mass_proposals_keep_the_chain_in_place() {
        // p = 1 with s_max = 1: the only flip empties the configuration,
        // so every step must stay at {1}.
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 40, 1, 3, &[0.8]);
        let mut hyper = Hyperparameters::defaults(40, 1);
        hyper.s_max = 1;
        let cache = ScoreCache::new();
        let start = score_configuration(
            &data,
            &fam,
            &Configuration::singleton(1),
            &hyper,
            &cache,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let next = mh_step(&start, &data, &fam, &hyper, &cache, &mut rng);
            assert_eq!(next.config, start.config);
        }
    }

    #[test]
    fn uphill_proposals_are_always_accepted() {
        // Start the chain at a noise singleton; the signal singleton scores
        // far higher, so the first time it is proposed it must be accepted.
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 120, 2, 5, &[2.0]);
        let mut hyper = Hyperparameters::defaults(120, 2);
        hyper.s_max = 1;
        let cache = ScoreCache::new();
        let noise = score_configuration(&data, &fam, &Configuration::singleton(2), &hyper, &cache);
        let signal = score_configuration(&data, &fam, &Configuration::singleton(1), &hyper, &cache);
        assert!(signal.log_score > noise.log_score);
        // With s_max = 1 the only admissible proposals from {2} are {1,2}
        // (rejected) and the empty set (rejected), so force s_max = 2 and
        // check the accepted two-step path through {1,2}.
        hyper.s_max = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = noise;
        let mut reached = false;
        for _ in 0..200 {
            state = mh_step(&state, &data, &fam, &hyper, &cache, &mut rng);
            if state.config == Configuration::singleton(1) {
                reached = true;
                break;
            }
        }
        assert!(reached, "chain never reached the dominant singleton");
    }

    #[test]
    fn three_state_chain_matches_the_analytic_distribution() {
        // p = 2, s_max = 2 gives states {1}, {2}, {1,2} connected by single
        // flips. Long-run frequencies must match exact enumeration, and the
        // conditional transition frequencies must match the acceptance
        // ratio.
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 60, 2, 7, &[0.9, 0.4]);
        let mut hyper = Hyperparameters::defaults(60, 2);
        hyper.s_max = 2;
        let cache = ScoreCache::new();
        let exact = enumerate_posterior(&data, &fam, &hyper).unwrap();

        let s1 = Configuration::singleton(1);
        let s12 = Configuration::new(vec![1, 2], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut state = score_configuration(&data, &fam, &s1, &hyper, &cache);
        let steps = 200_000;
        let mut freq: HashMap<Configuration, usize> = HashMap::new();
        let mut at_s1 = 0usize;
        let mut s1_to_s12 = 0usize;
        let mut at_s12 = 0usize;
        let mut s12_to_s1 = 0usize;
        for _ in 0..steps {
            let previous = state.config.clone();
            state = mh_step(&state, &data, &fam, &hyper, &cache, &mut rng);
            *freq.entry(state.config.clone()).or_default() += 1;
            if previous == s1 {
                at_s1 += 1;
                if state.config == s12 {
                    s1_to_s12 += 1;
                }
            } else if previous == s12 {
                at_s12 += 1;
                if state.config == s1 {
                    s12_to_s1 += 1;
                }
            }
        }
        for entry in &exact.entries {
            let observed = *freq.get(&entry.config).unwrap_or(&0) as f64 / steps as f64;
            assert!(
                (observed - entry.probability).abs() < 0.02,
                "state {} frequency {observed} vs exact {}",
                entry.config,
                entry.probability
            );
        }
        // Conditional flow ratio equals the acceptance ratio: with a
        // symmetric 1/p proposal, P(S -> S') / P(S' -> S)
        // = min(1, r) / min(1, 1/r) = r = exp(score' - score).
        let score1 = score_configuration(&data, &fam, &s1, &hyper, &cache).log_score;
        let score12 = score_configuration(&data, &fam, &s12, &hyper, &cache).log_score;
        let expected_ratio = (score12 - score1).exp();
        let forward = s1_to_s12 as f64 / at_s1 as f64;
        let backward = s12_to_s1 as f64 / at_s12 as f64;
        let observed_ratio = forward / backward;
        assert!(
            (observed_ratio / expected_ratio - 1.0).abs() < 0.15,
            "flow ratio {observed_ratio} vs analytic {expected_ratio}"
        );
    }

    #[test]
    fn chain_lengths_follow_the_burnin_arithmetic() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 50, 4, 9, &[1.0]);
        let mut hyper = Hyperparameters::defaults(50, 4);
        hyper.samples = 400;
        hyper.burnin = 0.2;
        let cache = ScoreCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let chain = run_chain(&data, &fam, &hyper, &cache, &mut rng).unwrap();
        assert_eq!(chain.samples.len(), 400);
        assert!(chain.acceptance_rate >= 0.0 && chain.acceptance_rate <= 1.0);
        // Every sample respects the size bounds.
        assert!(chain
            .samples
            .iter()
            .all(|s| s.len() >= 1 && s.len() <= hyper.s_max));
        // Visited holds at least every distinct retained sample.
        let distinct: HashSet<&Configuration> = chain.samples.iter().collect();
        for config in distinct {
            assert!(chain.visited.binary_search(config).is_ok());
        }
    }

    #[test]
    fn chains_are_reproducible_under_a_fixed_seed() {
        let fam = GlmFamily::poisson();
        let data = instance(&fam, 60, 5, 11, &[0.6, -0.4]);
        let mut hyper = Hyperparameters::defaults(60, 5);
        hyper.samples = 300;
        let run = |seed: u64| {
            let cache = ScoreCache::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_chain(&data, &fam, &hyper, &cache, &mut rng).unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.visited, b.visited);
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
        assert_eq!(a.initial_config, b.initial_config);
        let c = run(43);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn screening_starts_at_the_strongest_marginal_column() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 200, 6, 12, &[0.0, 0.0, 2.5]);
        let cache = ScoreCache::new();
        let hyper = Hyperparameters::defaults(200, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let chain = run_chain(&data, &fam, &hyper, &cache, &mut rng).unwrap();
        assert_eq!(chain.initial_config, Configuration::singleton(3));
    }

    fn hand_chain(samples: Vec<Configuration>, hyper: Hyperparameters) -> ChainResult {
        ChainResult {
            initial_config: samples[0].clone(),
            visited: {
                let mut v: Vec<Configuration> =
                    samples.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
                v.sort();
                v
            },
            acceptance_rate: 0.5,
            samples,
            hyper,
        }
    }

    #[test]
    fn inclusion_counts_samples_directly() {
        let hyper = Hyperparameters::defaults(50, 3);
        let c12 = Configuration::new(vec![1, 2], 3).unwrap();
        let c1 = Configuration::singleton(1);
        let chain = hand_chain(vec![c12.clone(), c1.clone(), c12.clone(), c1.clone()], hyper);
        let incl = inclusion_probabilities(&chain, 3);
        assert_eq!(incl, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn selection_uses_strict_thresholding() {
        assert_eq!(select(&[0.9, 0.1, 0.5], 0.5), vec![1]);
        assert_eq!(select(&[0.9, 0.1, 0.5], 0.1), vec![1, 3]);
        assert!(select(&[0.05, 0.02], 0.5).is_empty());
    }

    proptest! {
        #[test]
        fn lower_thresholds_select_supersets(
            incl in proptest::collection::vec(0.0..1.0f64, 1..12),
            t1 in 0.05..0.9f64,
            t2 in 0.05..0.9f64,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let wide = select(&incl, lo);
            let narrow = select(&incl, hi);
            prop_assert!(narrow.iter().all(|j| wide.contains(j)));
        }
    }

    #[test]
    fn estimates_average_cached_mle_coordinates() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 80, 3, 14, &[1.2, -0.8]);
        let hyper = Hyperparameters::defaults(80, 3);
        let cache = ScoreCache::new();
        let c12 = Configuration::new(vec![1, 2], 3).unwrap();
        let c1 = Configuration::singleton(1);
        let fit12 = score_configuration(&data, &fam, &c12, &hyper, &cache)
            .fit
            .unwrap();
        let fit1 = score_configuration(&data, &fam, &c1, &hyper, &cache)
            .fit
            .unwrap();

        // Chain visits {1,2} three times and {1} once.
        let chain = hand_chain(
            vec![c12.clone(), c12.clone(), c12.clone(), c1.clone()],
            hyper,
        );
        let estimates = estimate_coefficients(&chain, &cache, 3).unwrap();
        let expected_1 = (3.0 * fit12.theta_hat[0] + fit1.theta_hat[0]) / 4.0;
        let expected_2 = 3.0 * fit12.theta_hat[1] / 4.0;
        assert!((estimates[0] - expected_1).abs() < 1e-12);
        assert!((estimates[1] - expected_2).abs() < 1e-12);
        assert_eq!(estimates[2], 0.0);
    }

    #[test]
    fn estimates_require_cached_fits() {
        let hyper = Hyperparameters::defaults(50, 2);
        let chain = hand_chain(vec![Configuration::singleton(1)], hyper);
        let empty_cache = ScoreCache::new();
        assert!(matches!(
            estimate_coefficients(&chain, &empty_cache, 2),
            Err(Error::MissingFit(_))
        ));
    }

    #[test]
    fn predictions_stay_in_the_family_support_and_match_the_plugin_mean() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 400, 2, 15, &[1.0, -0.7]);
        let mut hyper = Hyperparameters::defaults(400, 2);
        hyper.samples = 4000;
        let cache = ScoreCache::new();
        let truth = Configuration::new(vec![1, 2], 2).unwrap();
        let scored = score_configuration(&data, &fam, &truth, &hyper, &cache);
        let fit = scored.fit.clone().unwrap();
        let chain = hand_chain(vec![truth; 4000], hyper.clone());

        let new_x = DMatrix::from_row_slice(2, 2, &[0.5, -0.4, -1.0, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let draws = predict(&chain, &cache, &fam, &new_x, &hyper, &mut rng).unwrap();
        assert_eq!(draws.shape(), (2, 4000));
        assert!(draws.iter().all(|&v| v == 0.0 || v == 1.0));
        for i in 0..2 {
            let lp = new_x.row(i).transpose().dot(&fit.theta_hat);
            let mu = fam.mean(lp).unwrap();
            let mean = draws.row(i).sum() / 4000.0;
            // Monte Carlo error: binomial plus the coefficient-draw spread,
            // bounded loosely by 4 binomial standard errors plus margin.
            let se = (mu * (1.0 - mu) / 4000.0).sqrt();
            assert!(
                (mean - mu).abs() < 6.0 * se + 0.01,
                "row {i}: predictive mean {mean} vs plug-in {mu}"
            );
        }
        // Determinism under a fixed seed.
        let mut rng2 = ChaCha8Rng::seed_from_u64(16);
        let again = predict(&chain, &cache, &fam, &new_x, &hyper, &mut rng2).unwrap();
        assert_eq!(draws, again);
    }

    #[test]
    fn shotgun_search_finds_the_enumerated_mode() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 100, 6, 17, &[1.5, -1.2]);
        let mut hyper = Hyperparameters::defaults(100, 6);
        hyper.s_max = 3;
        let exact = enumerate_posterior(&data, &fam, &hyper).unwrap();
        let mode = exact
            .entries
            .iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
            .unwrap();
        let cache = ScoreCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let walk = sss_search(&data, &fam, &hyper, &cache, &mut rng, 50).unwrap();
        assert_eq!(walk.samples.len(), 50);
        assert_eq!(walk.hyper.samples, 50);
        assert!(
            walk.samples.iter().any(|s| s == &mode.config),
            "search never reached the mode {}",
            mode.config
        );
        // Fixed seed reproduces the trajectory.
        let cache2 = ScoreCache::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(18);
        let again = sss_search(&data, &fam, &hyper, &cache2, &mut rng2, 50).unwrap();
        assert_eq!(walk.samples, again.samples);
    }

    #[test]
    fn shotgun_stays_put_when_no_neighbor_is_admissible() {
        // p = 1 with s_max = 1: the only flip empties the configuration,
        // so every iteration records the start state again.
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 50, 1, 19, &[0.8]);
        let mut hyper = Hyperparameters::defaults(50, 1);
        hyper.s_max = 1;
        let cache = ScoreCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let walk = sss_search(&data, &fam, &hyper, &cache, &mut rng, 6).unwrap();
        assert_eq!(walk.samples, vec![Configuration::singleton(1); 6]);
        assert_eq!(walk.acceptance_rate, 0.0);
    }

    #[test]
    fn shotgun_moves_deterministically_when_one_neighbor_remains() {
        // From a singleton with p = 2 and s_max = 2, the empty flip is
        // inadmissible, leaving {1,2} as the single neighbor: the first
        // move is forced no matter the seed.
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 50, 2, 19, &[0.8]);
        let mut hyper = Hyperparameters::defaults(50, 2);
        hyper.s_max = 2;
        let pair = Configuration::new(vec![1, 2], 2).unwrap();
        for seed in [20u64, 21, 22] {
            let cache = ScoreCache::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let walk = sss_search(&data, &fam, &hyper, &cache, &mut rng, 1).unwrap();
            assert_eq!(walk.initial_config.len(), 1);
            assert_eq!(walk.samples, vec![pair.clone()]);
        }
    }

    #[test]
    fn selection_report_combines_the_summaries() {
        let fam = GlmFamily::logistic();
        let data = instance(&fam, 150, 5, 21, &[1.8, -1.4]);
        let mut hyper = Hyperparameters::defaults(150, 5);
        hyper.samples = 2000;
        let cache = ScoreCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let chain = run_chain(&data, &fam, &hyper, &cache, &mut rng).unwrap();
        let report = selection_report(&chain, &cache, 5, hyper.threshold).unwrap();
        assert_eq!(report.inclusion.len(), 5);
        assert_eq!(report.estimates.len(), 5);
        // The selected set is exactly the strict-threshold image of the
        // inclusion vector.
        let recomputed = select(&report.inclusion, report.threshold);
        assert_eq!(report.selected, recomputed);
        // Columns never included must carry a zero estimate.
        for j in 0..5 {
            if report.inclusion[j] == 0.0 {
                assert_eq!(report.estimates[j], 0.0);
            }
        }
        // With this much signal the two true columns should be selected.
        assert!(report.selected.contains(&1) && report.selected.contains(&2));
    }
}
