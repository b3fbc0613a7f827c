//! Desk-scale selection experiments: AR(1) Gaussian designs, family
//! response draws, confusion metrics, and a replication harness that runs
//! the full chain pipeline under isolated per-replication RNG substreams.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Configuration, Dataset};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, GlmFamily, LinkKind};
use crate::posterior::ScoreCache;
use crate::prior::{HyperOverrides, Hyperparameters};
use crate::sampler::{estimate_coefficients, inclusion_probabilities, run_chain, select};

/// Inclusion threshold of the liberal method variant.
pub const EB1_THRESHOLD: f64 = 0.1;
/// Inclusion threshold of the majority-vote method variant.
pub const EB2_THRESHOLD: f64 = 0.5;

/// One experimental configuration of the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSetting {
    pub n: usize,
    pub p: usize,
    /// True support size; the first `s` coefficients carry the signal.
    pub s: usize,
    /// AR(1) correlation between adjacent covariates, in [0, 1).
    pub r: f64,
    /// Marginal covariate scale.
    pub sigma: f64,
    #[serde(alias = "family_kind")]
    pub family: FamilyKind,
    /// Value of each nonzero true coefficient.
    pub signal: f64,
    pub replications: usize,
}

impl SimSetting {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput(
                "simulation settings need n >= 1 and p >= 1".into(),
            ));
        }
        if self.s == 0 || self.s > self.p {
            return Err(Error::InvalidInput(format!(
                "true support size s = {} must lie in [1, p = {}]",
                self.s, self.p
            )));
        }
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::InvalidInput(format!(
                "AR(1) correlation r = {} must lie in [0, 1)",
                self.r
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "covariate scale sigma = {} must be positive and finite",
                self.sigma
            )));
        }
        if !self.signal.is_finite() {
            return Err(Error::InvalidInput("signal must be finite".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidInput(
                "at least one replication is required".into(),
            ));
        }
        Ok(())
    }

    /// True coefficient vector: the first `s` entries equal `signal`.
    pub fn theta_star(&self) -> DVector<f64> {
        let mut theta = DVector::zeros(self.p);
        for j in 0..self.s {
            theta[j] = self.signal;
        }
        theta
    }

    /// True support {1, ..., s}.
    pub fn true_config(&self) -> Configuration {
        Configuration::new((1..=self.s).collect(), self.p)
            .expect("validated settings have 1 <= s <= p")
    }

    /// Human-readable one-line description of the setting.
    pub fn label(&self) -> String {
        format!(
            "n={}, p={}, s={}, r={}, family={}, signal={}",
            self.n,
            self.p,
            self.s,
            self.r,
            family_label(self.family),
            self.signal
        )
    }
}

fn family_label(kind: FamilyKind) -> &'static str {
    match kind {
        FamilyKind::Bernoulli => "logistic",
        FamilyKind::Poisson => "poisson",
    }
}

/// Selection-quality summary of one replication or one aggregated setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub tpr: f64,
    pub tnr: f64,
    pub mcc: f64,
    /// Squared estimation error; absent when no estimate is in play.
    pub mse: Option<f64>,
}

/// Rows are independent draws from a zero-mean Gaussian whose covariance
/// has entries sigma^2 * r^|i-j|, generated by the stationary AR(1)
/// recursion x_j = r x_{j-1} + sqrt(1 - r^2) z_j.
pub fn generate_design<R: Rng + ?Sized>(setting: &SimSetting, rng: &mut R) -> DMatrix<f64> {
    let root = (1.0 - setting.r * setting.r).sqrt();
    let mut x = DMatrix::zeros(setting.n, setting.p);
    for i in 0..setting.n {
        let mut prev = 0.0;
        for j in 0..setting.p {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let value = if j == 0 { z } else { setting.r * prev + root * z };
            prev = value;
            x[(i, j)] = setting.sigma * value;
        }
    }
    x
}

/// Independent family draws at the linear predictors `X theta_star`.
pub fn generate_response<R: Rng + ?Sized>(
    fam: &GlmFamily,
    x: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if theta_star.len() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "theta_star has length {} but the design has {} columns",
            theta_star.len(),
            x.ncols()
        )));
    }
    let lp = x * theta_star;
    let mut y = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        y[i] = fam.draw(lp[i], rng).map_err(|e| match e {
            Error::Overflow { eta, guard } => Error::InvalidInput(format!(
                "response draw overflowed (linear predictor {eta:.1} exceeds {guard}); \
                 reduce the covariate scale sigma"
            )),
            other => other,
        })?;
    }
    Ok(y)
}

/// TPR, TNR, and Matthews correlation from the 2x2 confusion counts of
/// `selected` against `true_config`, with the 0/0 = 0 convention on every
/// ratio. Indices must lie in [1, p].
pub fn confusion_metrics(
    selected: &[usize],
    true_config: &Configuration,
    p: usize,
) -> Metrics {
    debug_assert!(selected.iter().all(|&j| j >= 1 && j <= p));
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &j in selected {
        if true_config.contains(j) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let fng = true_config.len() - tp;
    let tn = p - tp - fp - fng;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (tp, fp, fng, tn) = (tp as f64, fp as f64, fng as f64, tn as f64);
    let mcc_den = ((tp + fp) * (tp + fng) * (tn + fp) * (tn + fng)).sqrt();
    Metrics {
        tpr: ratio(tp as usize, (tp + fng) as usize),
        tnr: ratio(tn as usize, (tn + fp) as usize),
        mcc: if mcc_den == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fng) / mcc_den
        },
        mse: None,
    }
}

/// Squared Euclidean distance between an estimate and the truth; the
/// harness averages these across replications.
pub fn mse(estimate: &[f64], theta_star: &[f64]) -> f64 {
    assert_eq!(
        estimate.len(),
        theta_star.len(),
        "estimate and truth must have equal lengths"
    );
    estimate
        .iter()
        .zip(theta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// One replication's outcome under both method variants.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    /// Substream seed, sufficient to reproduce this replication alone.
    pub seed: u64,
    pub eb1: Metrics,
    pub eb2: Metrics,
}

/// Aggregates and per-replication detail for one setting.
#[derive(Debug, Clone, Serialize)]
pub struct SettingResult {
    pub setting: SimSetting,
    pub completed: usize,
    /// Human-readable description of each failed replication.
    pub failures: Vec<String>,
    /// Arithmetic means over completed replications.
    pub eb1: Metrics,
    pub eb2: Metrics,
    pub replications: Vec<ReplicationRecord>,
}

/// Full study output: aggregate table plus per-replication logs.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub settings: Vec<SettingResult>,
}

impl StudyReport {
    /// Aggregate table with one row per setting and method variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,p,s,r,family,method,TPR,TNR,MCC,MSE,replications,seed\n");
        for result in &self.settings {
            let s = &result.setting;
            for (method, m) in [("EB1", &result.eb1), ("EB2", &result.eb2)] {
                let mse_cell = m
                    .mse
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{}\n",
                    s.n,
                    s.p,
                    s.s,
                    s.r,
                    family_label(s.family),
                    method,
                    m.tpr,
                    m.tnr,
                    m.mcc,
                    mse_cell,
                    result.completed,
                    self.master_seed
                ));
            }
        }
        out
    }
}

/// SplitMix-style finalizer used to derive independent substreams.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream seed for one replication: the master seed hashed with the
/// setting and replication indices, so any replication reproduces in
/// isolation regardless of how many others run.
fn replication_seed(master: u64, setting_idx: usize, replication: usize) -> u64 {
    let a = mix64(master);
    let b = mix64(a ^ setting_idx as u64);
    mix64(b ^ replication as u64)
}

fn run_replication(
    setting: &SimSetting,
    fam: &GlmFamily,
    hyper: &Hyperparameters,
    theta_star: &DVector<f64>,
    truth: &Configuration,
    replication: usize,
    seed: u64,
) -> Result<ReplicationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = generate_design(setting, &mut rng);
    let y = generate_response(fam, &x, theta_star, &mut rng)?;
    let data = Dataset::new(x, y, vec![], fam)?;
    let cache = ScoreCache::new();
    let chain = run_chain(&data, fam, hyper, &cache, &mut rng)?;
    let inclusion = inclusion_probabilities(&chain, setting.p);
    let estimates = estimate_coefficients(&chain, &cache, setting.p)?;
    let error = mse(&estimates, theta_star.as_slice());
    let with_mse = |mut m: Metrics| {
        m.mse = Some(error);
        m
    };
    Ok(ReplicationRecord {
        replication,
        seed,
        eb1: with_mse(confusion_metrics(
            &select(&inclusion, EB1_THRESHOLD),
            truth,
            setting.p,
        )),
        eb2: with_mse(confusion_metrics(
            &select(&inclusion, EB2_THRESHOLD),
            truth,
            setting.p,
        )),
    })
}

fn mean_metrics(records: &[ReplicationRecord], pick: impl Fn(&ReplicationRecord) -> &Metrics) -> Metrics {
    let k = records.len() as f64;
    let mut acc = Metrics {
        tpr: 0.0,
        tnr: 0.0,
        mcc: 0.0,
        mse: Some(0.0),
    };
    for record in records {
        let m = pick(record);
        acc.tpr += m.tpr;
        acc.tnr += m.tnr;
        acc.mcc += m.mcc;
        if let (Some(total), Some(v)) = (acc.mse.as_mut(), m.mse) {
            *total += v;
        }
    }
    Metrics {
        tpr: acc.tpr / k,
        tnr: acc.tnr / k,
        mcc: acc.mcc / k,
        mse: acc.mse.map(|t| t / k),
    }
}

/// Runs every setting for its configured number of replications on a
/// worker pool of `threads` workers (0 picks the core count). Each
/// replication draws its own data, runs the full chain pipeline with a
/// private fit cache, and is scored under both method variants (inclusion
/// thresholds 0.1 and 0.5); the aggregated coefficient estimate, and
/// hence the reported squared error, is threshold-free. Failed
/// replications are recorded and excluded from the aggregates; a setting
/// where every replication fails aborts the study.
pub fn run_study(
    settings: &[SimSetting],
    overrides: &HyperOverrides,
    master_seed: u64,
    threads: usize,
) -> Result<StudyReport> {
    if settings.is_empty() {
        return Err(Error::InvalidInput(
            "the study needs at least one setting".into(),
        ));
    }
    for setting in settings {
        setting.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("could not build the worker pool: {e}")))?;

    let mut results = Vec::with_capacity(settings.len());
    for (setting_idx, setting) in settings.iter().enumerate() {
        let fam = GlmFamily::new(setting.family, LinkKind::Canonical)?;
        let hyper = overrides.resolve(setting.n, setting.p)?;
        let theta_star = setting.theta_star();
        let truth = setting.true_config();

        let outcomes: Vec<std::result::Result<ReplicationRecord, String>> = pool.install(|| {
            (0..setting.replications)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(master_seed, setting_idx, rep);
                    run_replication(setting, &fam, &hyper, &theta_star, &truth, rep, seed)
                        .map_err(|e| format!("replication {rep}: {e}"))
                })
                .collect()
        });

        let mut records = Vec::new();
        let mut failures = Vec::new();
        for outcome in outcomes {
            match outcome {
                Ok(record) => records.push(record),
                Err(message) => failures.push(message),
            }
        }
        if records.is_empty() {
            return Err(Error::AllReplicationsFailed {
                setting: setting.label(),
                replications: setting.replications,
                first_failure: failures
                    .first()
                    .cloned()
                    .unwrap_or_else(|| "no failure detail".into()),
            });
        }
        results.push(SettingResult {
            setting: setting.clone(),
            completed: records.len(),
            failures,
            eb1: mean_metrics(&records, |r| &r.eb1),
            eb2: mean_metrics(&records, |r| &r.eb2),
            replications: records,
        });
    }
    Ok(StudyReport {
        master_seed,
        settings: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setting(family: FamilyKind) -> SimSetting {
        SimSetting {
            n: 60,
            p: 8,
            s: 2,
            r: 0.2,
            sigma: 1.0,
            family,
            signal: 2.5,
            replications: 2,
        }
    }

    fn sample_correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..a.len() {
            cov += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
        }
        cov / (va * vb).sqrt()
    }

    #[test]
    fn design_generation_is_deterministic() {
        let s = setting(FamilyKind::Bernoulli);
        let a = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(1));
        let b = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let c = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a, c);
    }

    #[test]
    fn independent_designs_show_no_adjacent_correlation() {
        let s = SimSetting {
            n: 10_000,
            p: 3,
            r: 0.0,
            ..setting(FamilyKind::Bernoulli)
        };
        let x = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(3));
        let bound = 4.0 / (s.n as f64).sqrt() * 1.1;
        for j in 0..2 {
            let a: Vec<f64> = x.column(j).iter().copied().collect();
            let b: Vec<f64> = x.column(j + 1).iter().copied().collect();
            let rho = sample_correlation(&a, &b);
            assert!(rho.abs() <= bound, "columns {j},{}: rho = {rho}", j + 1);
        }
    }

    #[test]
    fn ar1_designs_match_the_target_correlation_and_scale() {
        let s = SimSetting {
            n: 10_000,
            p: 4,
            r: 0.2,
            sigma: 0.3,
            ..setting(FamilyKind::Poisson)
        };
        let x = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(4));
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| x.column(j).iter().copied().collect())
            .collect();
        for j in 0..3 {
            let rho = sample_correlation(&cols[j], &cols[j + 1]);
            assert!(
                (rho - 0.2).abs() < 0.04,
                "adjacent correlation {rho} should be near 0.2"
            );
        }
        for col in &cols {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(
                (var - 0.09).abs() < 0.006,
                "marginal variance {var} should be near sigma^2 = 0.09"
            );
        }
    }

    #[test]
    fn null_model_responses_have_the_family_means() {
        let s = SimSetting {
            n: 4000,
            p: 2,
            ..setting(FamilyKind::Bernoulli)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = generate_design(&s, &mut rng);
        let zero = DVector::zeros(2);

        let fam = GlmFamily::logistic();
        let y = generate_response(&fam, &x, &zero, &mut rng).unwrap();
        let mean = y.sum() / 4000.0;
        assert!((mean - 0.5).abs() <= 4.0 * (0.25_f64 / 4000.0).sqrt());

        let fam = GlmFamily::poisson();
        let y = generate_response(&fam, &x, &zero, &mut rng).unwrap();
        let mean = y.sum() / 4000.0;
        assert!((mean - 1.0).abs() <= 4.0 * (1.0_f64 / 4000.0).sqrt());
    }

    #[test]
    fn response_generation_is_deterministic() {
        let s = setting(FamilyKind::Poisson);
        let x = generate_design(&s, &mut ChaCha8Rng::seed_from_u64(6));
        let theta = s.theta_star();
        let fam = GlmFamily::poisson();
        let a = generate_response(&fam, &x, &theta, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_response(&fam, &x, &theta, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_response_overflow_advises_rescaling() {
        let fam = GlmFamily::poisson();
        let x = DMatrix::from_element(5, 1, 30.0);
        let theta = DVector::from_vec(vec![30.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        match generate_response(&fam, &x, &theta, &mut rng) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("sigma"), "{msg}"),
            other => panic!("expected an overflow advisory, got {other:?}"),
        }
    }

    #[test]
    fn perfect_selection_scores_ones() {
        let truth = Configuration::new(vec![1, 2, 3, 4], 200).unwrap();
        let m = confusion_metrics(&[1, 2, 3, 4], &truth, 200);
        assert_eq!(m.tpr, 1.0);
        assert_eq!(m.tnr, 1.0);
        assert_eq!(m.mcc, 1.0);
    }

    #[test]
    fn empty_selection_scores_zero_by_convention() {
        let truth = Configuration::new(vec![1, 2, 3, 4], 200).unwrap();
        let m = confusion_metrics(&[], &truth, 200);
        assert_eq!(m.tpr, 0.0);
        assert_eq!(m.tnr, 1.0);
        assert_eq!(m.mcc, 0.0);
    }

    #[test]
    fn confusion_matches_the_frozen_arithmetic() {
        // truth {1,2,3,4}, selected {1,2,3,5,6}, p = 200: TP=3, FP=2,
        // FN=1, TN=194. 30-digit reference for
        // 580 / sqrt(5 * 4 * 196 * 195): 0.663388065763932410.
        let truth = Configuration::new(vec![1, 2, 3, 4], 200).unwrap();
        let m = confusion_metrics(&[1, 2, 3, 5, 6], &truth, 200);
        assert_eq!(m.tpr, 0.75);
        assert_eq!(m.tnr, 194.0 / 196.0);
        assert!((m.mcc - 0.663388065763932410).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn metric_bounds_always_hold(
            p in 4usize..30,
            truth_raw in proptest::collection::btree_set(1usize..30, 1..6),
            selected_raw in proptest::collection::btree_set(1usize..30, 0..8),
        ) {
            let truth_idx: Vec<usize> = truth_raw.into_iter().filter(|&j| j <= p).collect();
            prop_assume!(!truth_idx.is_empty());
            let truth = Configuration::new(truth_idx, p).unwrap();
            let selected: Vec<usize> = selected_raw.into_iter().filter(|&j| j <= p).collect();
            let m = confusion_metrics(&selected, &truth, p);
            prop_assert!((0.0..=1.0).contains(&m.tpr));
            prop_assert!((0.0..=1.0).contains(&m.tnr));
            prop_assert!((-1.0..=1.0).contains(&m.mcc));
        }

        #[test]
        fn squared_error_matches_direct_summation(
            a in proptest::collection::vec(-5.0..5.0f64, 6),
            b in proptest::collection::vec(-5.0..5.0f64, 6),
        ) {
            let direct: f64 = (0..6).map(|i| (a[i] - b[i]).powi(2)).sum();
            prop_assert!((mse(&a, &b) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn squared_error_special_cases() {
        assert_eq!(mse(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
        let truth = [3.0, 3.0, 3.0, 3.0, 0.0, 0.0];
        let zeros = [0.0; 6];
        assert_eq!(mse(&zeros, &truth), 36.0);
    }

    #[test]
    fn settings_are_validated() {
        let base = setting(FamilyKind::Bernoulli);
        for bad in [
            SimSetting { r: 1.0, ..base.clone() },
            SimSetting { s: 0, ..base.clone() },
            SimSetting { s: 9, ..base.clone() },
            SimSetting { replications: 0, ..base.clone() },
            SimSetting { sigma: 0.0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidInput(_))));
        }
        assert!(base.validate().is_ok());
    }

    #[test]
    fn studies_are_reproducible_and_isolated_per_replication() {
        let s = setting(FamilyKind::Bernoulli);
        let overrides = HyperOverrides {
            samples: Some(300),
            ..HyperOverrides::default()
        };
        let a = run_study(std::slice::from_ref(&s), &overrides, 11, 1).unwrap();
        let b = run_study(std::slice::from_ref(&s), &overrides, 11, 2).unwrap();
        // Identical output regardless of worker count or rerun.
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.to_csv(), b.to_csv());

        // Adding a replication leaves earlier ones untouched.
        let wider = SimSetting {
            replications: 3,
            ..s
        };
        let c = run_study(&[wider], &overrides, 11, 1).unwrap();
        for rep in 0..2 {
            assert_eq!(
                serde_json::to_string(&a.settings[0].replications[rep]).unwrap(),
                serde_json::to_string(&c.settings[0].replications[rep]).unwrap()
            );
        }
    }

    #[test]
    fn aggregates_are_replication_means() {
        let s = SimSetting {
            replications: 3,
            ..setting(FamilyKind::Poisson)
        };
        let overrides = HyperOverrides {
            samples: Some(300),
            ..HyperOverrides::default()
        };
        let report = run_study(&[s], &overrides, 12, 0).unwrap();
        let result = &report.settings[0];
        assert_eq!(result.completed, 3);
        assert!(result.failures.is_empty());
        let k = result.replications.len() as f64;
        let mean_tpr: f64 = result.replications.iter().map(|r| r.eb2.tpr).sum::<f64>() / k;
        let mean_mse: f64 =
            result.replications.iter().map(|r| r.eb2.mse.unwrap()).sum::<f64>() / k;
        assert!((result.eb2.tpr - mean_tpr).abs() < 1e-15);
        assert!((result.eb2.mse.unwrap() - mean_mse).abs() < 1e-15);
    }

    #[test]
    fn hopeless_scales_fail_loudly() {
        // sigma = 25 with signal 40 pushes count linear predictors past the
        // overflow guard in essentially every replication.
        let s = SimSetting {
            n: 30,
            p: 6,
            sigma: 25.0,
            signal: 40.0,
            replications: 3,
            ..setting(FamilyKind::Poisson)
        };
        let overrides = HyperOverrides::default();
        match run_study(&[s], &overrides, 13, 1) {
            Err(Error::AllReplicationsFailed {
                replications,
                first_failure,
                ..
            }) => {
                assert_eq!(replications, 3);
                assert!(first_failure.contains("sigma"), "{first_failure}");
            }
            other => panic!("expected a total failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_the_documented_schema() {
        let s = setting(FamilyKind::Bernoulli);
        let overrides = HyperOverrides {
            samples: Some(200),
            ..HyperOverrides::default()
        };
        let report = run_study(&[s], &overrides, 14, 1).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(
            lines[0],
            "n,p,s,r,family,method,TPR,TNR,MCC,MSE,replications,seed"
        );
        assert_eq!(lines.len(), 3);
        let row: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(row.len(), 12);
        assert_eq!(row[0], "60");
        assert_eq!(row[4], "logistic");
        assert_eq!(row[5], "EB1");
        assert_eq!(row[11], "14");
        assert!(lines[2].contains("EB2"));
    }

    #[test]
    fn strong_signals_are_recovered_in_a_small_study() {
        let s = SimSetting {
            n: 100,
            signal: 3.0,
            ..setting(FamilyKind::Bernoulli)
        };
        let overrides = HyperOverrides {
            samples: Some(1000),
            ..HyperOverrides::default()
        };
        let report = run_study(&[s], &overrides, 15, 0).unwrap();
        let result = &report.settings[0];
        assert!(
            result.eb2.tpr >= 0.5,
            "strong two-coefficient signal should mostly be found, tpr = {}",
            result.eb2.tpr
        );
        assert!(result.eb2.tnr >= 0.8, "tnr = {}", result.eb2.tnr);
    }
}
