//! Synthetic historical/current trial pools and replication studies of the
//! calibration pipeline.
//!
//! Each subject carries a binary effect modifier `bpd` and three binary
//! covariates `x1..x3` with trial-specific success rates. Outcomes depend only
//! on trial, arm and `bpd`, so the target-population truth is a closed-form
//! mixture of the configured rates.

use rand::distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::calibration::{self, ArmTransform, CalibrationResult, EffectMetric};
use crate::data::{Arm, PooledDataset, SubjectRecord, Trial};
use crate::error::{Error, Result};
use crate::glm::{self, Family};
use crate::par::{self, Execution};
use crate::propensity::{self, PropensitySpec, WeightSet};
use crate::rng::{self, StreamRng, RNG_ALGORITHM};

pub const COVARIATES: [&str; 4] = ["bpd", "x1", "x2", "x3"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmRates {
    pub bpd: f64,
    pub non_bpd: f64,
}

impl ArmRates {
    fn rate(&self, bpd: bool) -> f64 {
        if bpd {
            self.bpd
        } else {
            self.non_bpd
        }
    }

    /// Marginal event rate at BPD prevalence `prevalence`.
    pub fn mixture(&self, prevalence: f64) -> f64 {
        prevalence * self.bpd + (1.0 - prevalence) * self.non_bpd
    }
}

/// Event probabilities by arm and BPD stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRates {
    pub arm0: ArmRates,
    pub arm1: ArmRates,
}

impl EventRates {
    pub fn arm(&self, arm: Arm) -> &ArmRates {
        match arm {
            Arm::Zero => &self.arm0,
            Arm::One => &self.arm1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_historical: usize,
    pub n_current: usize,
    /// Fraction of each trial allocated to arm 0 (the first subjects in input order).
    pub historical_arm0_fraction: f64,
    pub current_arm0_fraction: f64,
    /// Success rates of x1, x2, x3.
    pub historical_covariate_rates: [f64; 3],
    pub current_covariate_rates: [f64; 3],
    pub historical_bpd_prevalence: f64,
    pub current_bpd_prevalence: f64,
    /// Historical arm 0 = placebo, arm 1 = active control.
    pub historical_rates: EventRates,
    /// Current arm 0 = active control, arm 1 = experimental.
    pub current_rates: EventRates,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_historical: 1502,
            n_current: 6635,
            historical_arm0_fraction: 500.0 / 1502.0,
            current_arm0_fraction: 3330.0 / 6635.0,
            historical_covariate_rates: [0.4, 0.6, 0.5],
            current_covariate_rates: [0.6, 0.5, 0.4],
            historical_bpd_prevalence: 762.0 / 1502.0,
            current_bpd_prevalence: 0.22,
            historical_rates: EventRates {
                arm0: ArmRates { bpd: 34.0 / 266.0, non_bpd: 19.0 / 234.0 },
                arm1: ArmRates { bpd: 39.0 / 496.0, non_bpd: 9.0 / 506.0 },
            },
            current_rates: EventRates {
                arm0: ArmRates { bpd: 28.0 / 723.0, non_bpd: 34.0 / 2607.0 },
                arm1: ArmRates { bpd: 22.0 / 722.0, non_bpd: 24.0 / 2583.0 },
            },
            seed: 20130401,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_historical == 0 || self.n_current == 0 {
            return Err(Error::InvalidInput("trial sizes must be at least 1".into()));
        }
        let probs = [
            self.historical_arm0_fraction,
            self.current_arm0_fraction,
            self.historical_bpd_prevalence,
            self.current_bpd_prevalence,
        ]
        .into_iter()
        .chain(self.historical_covariate_rates)
        .chain(self.current_covariate_rates)
        .chain([self.historical_rates, self.current_rates].into_iter().flat_map(|r| {
            [r.arm0.bpd, r.arm0.non_bpd, r.arm1.bpd, r.arm1.non_bpd]
        }));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Historical arm event rate in the current trial's population.
    pub fn target_arm_mean(&self, arm: Arm) -> f64 {
        self.historical_rates.arm(arm).mixture(self.current_bpd_prevalence)
    }

    /// Historical arm event rate in the historical population.
    pub fn source_arm_mean(&self, arm: Arm) -> f64 {
        self.historical_rates.arm(arm).mixture(self.historical_bpd_prevalence)
    }

    fn contrast(&self, metric: EffectMetric, mean: impl Fn(Arm) -> f64) -> f64 {
        let (a, b) = (mean(Arm::Zero), mean(Arm::One));
        match (metric.contrast, metric.transform) {
            (calibration::Contrast::Difference, ArmTransform::Identity) => a - b,
            _ => glm::logit(a) - glm::logit(b),
        }
    }

    /// Arm 0 vs arm 1 effect of the historical treatments in the target population.
    pub fn target_effect(&self, metric: EffectMetric) -> f64 {
        self.contrast(metric, |a| self.target_arm_mean(a))
    }

    /// Same effect in the historical population (what an unweighted analysis estimates).
    pub fn source_effect(&self, metric: EffectMetric) -> f64 {
        self.contrast(metric, |a| self.source_arm_mean(a))
    }
}

fn bernoulli(p: f64) -> Bernoulli {
    // validated probabilities
    Bernoulli::new(p).expect("probability in [0, 1]")
}

fn draw_trial(
    cfg: &SimConfig,
    trial: Trial,
    rng: &mut StreamRng,
    out: &mut Vec<SubjectRecord>,
) {
    let (n, arm0_fraction, x_rates, prevalence, rates) = match trial {
        Trial::Historical => (
            cfg.n_historical,
            cfg.historical_arm0_fraction,
            cfg.historical_covariate_rates,
            cfg.historical_bpd_prevalence,
            cfg.historical_rates,
        ),
        Trial::Current => (
            cfg.n_current,
            cfg.current_arm0_fraction,
            cfg.current_covariate_rates,
            cfg.current_bpd_prevalence,
            cfg.current_rates,
        ),
    };
    let n_arm0 = (n as f64 * arm0_fraction).round() as usize;
    let bpd_dist = bernoulli(prevalence);
    let x_dist = x_rates.map(bernoulli);
    for k in 0..n {
        let arm = if k < n_arm0 { Arm::Zero } else { Arm::One };
        let bpd = bpd_dist.sample(rng);
        let xs = x_dist.each_ref().map(|d| d.sample(rng));
        let outcome = bernoulli(rates.arm(arm).rate(bpd)).sample(rng);
        out.push(SubjectRecord {
            id: format!("{}{:05}", trial.code(), k + 1),
            trial,
            arm,
            outcome: outcome as u8 as f64,
            covariates: vec![bpd as u8 as f64, xs[0] as u8 as f64, xs[1] as u8 as f64, xs[2] as u8 as f64],
        });
    }
}

/// Pool drawn from stream `stream` of `cfg.seed`.
pub fn generate_pool_stream(cfg: &SimConfig, stream: u64) -> Result<PooledDataset> {
    cfg.validate()?;
    let mut rng = rng::substream(cfg.seed, stream);
    let mut records = Vec::with_capacity(cfg.n_historical + cfg.n_current);
    draw_trial(cfg, Trial::Historical, &mut rng, &mut records);
    draw_trial(cfg, Trial::Current, &mut rng, &mut records);
    PooledDataset::new(COVARIATES.iter().map(|s| s.to_string()).collect(), records)
}

/// Historical and current subjects with covariates and outcomes; deterministic in `cfg.seed`.
pub fn generate_pool(cfg: &SimConfig) -> Result<PooledDataset> {
    generate_pool_stream(cfg, 0)
}

/// Subject counts and events of one arm within the two BPD strata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCounts {
    pub bpd: (usize, usize),
    pub non_bpd: (usize, usize),
}

/// IMPACT (historical) arms: placebo, palivizumab.
pub const IMPACT: [CellCounts; 2] = [
    CellCounts { bpd: (266, 34), non_bpd: (234, 19) },
    CellCounts { bpd: (496, 39), non_bpd: (506, 9) },
];

/// MOTA (current) arms: palivizumab, motavizumab.
pub const MOTA: [CellCounts; 2] = [
    CellCounts { bpd: (723, 28), non_bpd: (2607, 34) },
    CellCounts { bpd: (722, 22), non_bpd: (2583, 24) },
];

fn expand(trial: Trial, arms: &[CellCounts; 2], out: &mut Vec<SubjectRecord>) {
    let mut k = 0;
    for (a, cells) in arms.iter().enumerate() {
        let arm = Arm::from_index(a).expect("two arms");
        for (bpd, (n, events)) in [(1.0, cells.bpd), (0.0, cells.non_bpd)] {
            for i in 0..n {
                k += 1;
                out.push(SubjectRecord {
                    id: format!("{}{:05}", trial.code(), k),
                    trial,
                    arm,
                    outcome: if i < events { 1.0 } else { 0.0 },
                    covariates: vec![bpd],
                });
            }
        }
    }
}

/// Subject-level expansion of the published cell counts, covariate `bpd`.
pub fn table_one_pool(include_current: bool) -> PooledDataset {
    let mut records = Vec::new();
    expand(Trial::Historical, &IMPACT, &mut records);
    if include_current {
        expand(Trial::Current, &MOTA, &mut records);
    }
    PooledDataset::new(vec!["bpd".into()], records).expect("static table is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationAnalysis {
    pub propensity: PropensitySpec,
    pub trim: Option<(f64, f64)>,
    pub metric: EffectMetric,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for ReplicationAnalysis {
    fn default() -> Self {
        Self {
            propensity: PropensitySpec::main_effects(&COVARIATES),
            trim: None,
            metric: EffectMetric::log_odds_ratio(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub calibrated: f64,
    pub calibrated_se: f64,
    pub uncalibrated: f64,
    pub uncalibrated_se: f64,
    /// Calibrated arm means and their sandwich SEs.
    pub arm_means: [f64; 2],
    pub arm_mean_ses: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub truth: f64,
    pub mean: f64,
    /// Standard deviation across replicates.
    pub empirical_se: f64,
    pub mean_se: f64,
    /// Monte Carlo standard error of `mean`.
    pub mc_error: f64,
    /// Share of 95% normal intervals covering `truth`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub seed: u64,
    pub rng: String,
    pub metric: EffectMetric,
    pub calibrated: EstimatorSummary,
    pub uncalibrated: EstimatorSummary,
    /// Coverage of the calibrated arm-mean intervals for the target arm means.
    pub arm_mean_coverage: [f64; 2],
    pub replicates: Vec<ReplicateOutcome>,
}

const Z_95: f64 = 1.959963984540054;

fn analyze_replicate(cfg: &SimConfig, analysis: &ReplicationAnalysis, r: usize) -> Result<ReplicateOutcome> {
    let pool = generate_pool_stream(cfg, r as u64)?;
    let model = propensity::fit_propensity(&pool, &analysis.propensity)?;
    let mut weights = propensity::propensity_weights(&model, &pool)?;
    if let Some((lo, hi)) = analysis.trim {
        weights = propensity::trim_weights(&weights, lo, hi)?;
    }
    let hist = pool.indices(Trial::Historical);
    let arm_fit = |w: &WeightSet| -> Result<[CalibrationResult; 2]> {
        let fit = |arm: Arm| {
            let pos: Vec<usize> = (0..hist.len()).filter(|&k| pool.records()[hist[k]].arm == arm).collect();
            let y: Vec<f64> = pos.iter().map(|&k| pool.records()[hist[k]].outcome).collect();
            calibration::calibrate_arm_parametric(&y, &w.select(&pos), Family::Bernoulli, analysis.metric.transform)
        };
        Ok([fit(Arm::Zero)?, fit(Arm::One)?])
    };
    let [c0, c1] = arm_fit(&weights)?;
    let [u0, u1] = arm_fit(&WeightSet::ones(hist.len()))?;
    let cal = calibration::calibrated_effect(&c0, &c1, analysis.metric.contrast)?;
    let unc = calibration::calibrated_effect(&u0, &u1, analysis.metric.contrast)?;
    Ok(ReplicateOutcome {
        replicate: r,
        calibrated: cal.estimate,
        calibrated_se: cal.std_error,
        uncalibrated: unc.estimate,
        uncalibrated_se: unc.std_error,
        arm_means: [c0.estimate, c1.estimate],
        arm_mean_ses: [c0.std_error, c1.std_error],
    })
}

fn summarize(truth: f64, est: &[f64], se: &[f64]) -> EstimatorSummary {
    let n = est.len() as f64;
    let mean = est.iter().sum::<f64>() / n;
    let var = est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let covered = est
        .iter()
        .zip(se)
        .filter(|(e, s)| (*e - truth).abs() <= Z_95 * **s)
        .count();
    EstimatorSummary {
        truth,
        mean,
        empirical_se: var.sqrt(),
        mean_se: se.iter().sum::<f64>() / n,
        mc_error: var.sqrt() / n.sqrt(),
        coverage: covered as f64 / n,
    }
}

/// Repeats generate -> propensity weights -> calibrated and unweighted
/// effects over `replications` independent pools (stream r for replicate r).
pub fn run_replication_study(cfg: &SimConfig, replications: usize, analysis: &ReplicationAnalysis) -> Result<ReplicationSummary> {
    cfg.validate()?;
    analysis.metric.check_family(Family::Bernoulli)?;
    if replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let results = par::map_indices(analysis.execution, replications, |r| analyze_replicate(cfg, analysis, r));
    let mut replicates = Vec::with_capacity(replications);
    let mut failure_messages = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => replicates.push(o),
            Err(e) => failure_messages.push(format!("replicate {r}: {e}")),
        }
    }
    if replicates.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {replications} replicates failed; first: {}",
            failure_messages[0]
        )));
    }
    let pick = |f: fn(&ReplicateOutcome) -> f64| replicates.iter().map(f).collect::<Vec<f64>>();
    let calibrated = summarize(cfg.target_effect(analysis.metric), &pick(|o| o.calibrated), &pick(|o| o.calibrated_se));
    let uncalibrated = summarize(cfg.source_effect(analysis.metric), &pick(|o| o.uncalibrated), &pick(|o| o.uncalibrated_se));
    let arm_mean_coverage = Arm::BOTH.map(|arm| {
        let a = arm.index();
        let truth = cfg.target_arm_mean(arm);
        let truth = match analysis.metric.transform {
            ArmTransform::Identity => truth,
            ArmTransform::Logit => glm::logit(truth),
        };
        summarize(
            truth,
            &replicates.iter().map(|o| o.arm_means[a]).collect::<Vec<_>>(),
            &replicates.iter().map(|o| o.arm_mean_ses[a]).collect::<Vec<_>>(),
        )
        .coverage
    });
    Ok(ReplicationSummary {
        replications,
        failures: failure_messages.len(),
        failure_messages,
        seed: cfg.seed,
        rng: RNG_ALGORITHM.to_string(),
        metric: analysis.metric,
        calibrated,
        uncalibrated,
        arm_mean_coverage,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_one_tallies() {
        let pool = table_one_pool(true);
        let t = |trial, arm| pool.tally(trial, arm);
        assert_eq!(t(Trial::Historical, Arm::Zero).subjects, 500);
        assert_eq!(t(Trial::Historical, Arm::Zero).outcome_sum, 53.0);
        assert_eq!(t(Trial::Historical, Arm::One).subjects, 1002);
        assert_eq!(t(Trial::Historical, Arm::One).outcome_sum, 48.0);
        assert_eq!(pool.count(Trial::Current), 6635);
    }

    #[test]
    fn default_pool_shape() {
        let cfg = SimConfig::default();
        let pool = generate_pool(&cfg).unwrap();
        assert_eq!(pool.count(Trial::Historical), 1502);
        assert_eq!(pool.count(Trial::Current), 6635);
        let hist = pool.indices(Trial::Historical);
        let x1 = pool.covariate_column("x1", &hist).unwrap();
        let mean = x1.iter().sum::<f64>() / 1502.0;
        assert!((mean - 0.4).abs() <= 3.0 * (0.24_f64 / 1502.0).sqrt(), "x1 mean {mean}");
    }

    #[test]
    fn reproducible_and_stream_dependent() {
        let cfg = SimConfig::default();
        assert_eq!(generate_pool(&cfg).unwrap(), generate_pool(&cfg).unwrap());
        assert_ne!(generate_pool_stream(&cfg, 0).unwrap(), generate_pool_stream(&cfg, 1).unwrap());
    }

    #[test]
    fn zero_rates_give_no_events() {
        let zero = EventRates { arm0: ArmRates { bpd: 0.0, non_bpd: 0.0 }, arm1: ArmRates { bpd: 0.0, non_bpd: 0.0 } };
        let cfg = SimConfig { historical_rates: zero, current_rates: zero, ..Default::default() };
        let pool = generate_pool(&cfg).unwrap();
        assert!(pool.records().iter().all(|r| r.outcome == 0.0));
    }

    #[test]
    fn invalid_config() {
        let cfg = SimConfig { current_bpd_prevalence: 1.2, ..Default::default() };
        assert!(generate_pool(&cfg).is_err());
        let cfg = SimConfig { n_current: 0, ..Default::default() };
        assert!(generate_pool(&cfg).is_err());
    }

    #[test]
    fn closed_form_truths() {
        let cfg = SimConfig::default();
        let p0 = 0.22 * 34.0 / 266.0 + 0.78 * 19.0 / 234.0;
        let p1 = 0.22 * 39.0 / 496.0 + 0.78 * 9.0 / 506.0;
        assert_abs_diff_eq!(cfg.target_effect(EffectMetric::log_odds_ratio()), glm::logit(p0) - glm::logit(p1), epsilon = 1e-14);
        assert_abs_diff_eq!(cfg.target_effect(EffectMetric::risk_difference()), p0 - p1, epsilon = 1e-14);
    }
}
