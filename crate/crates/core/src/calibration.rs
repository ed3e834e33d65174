//! Calibrated arm-level and contrast estimates in the target population.
//!
//! The parametric route maximizes the weighted intercept-only likelihood and
//! takes its uncertainty from the sandwich covariance. The nonparametric
//! route is the weighted mean `sum w y / sum w` with a bootstrap standard
//! error. For an intercept-only canonical-link model the weighted score
//! equation makes the two point estimates identical.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapOptions};
use crate::data::{Arm, PooledDataset, Trial};
use crate::error::{Error, Result};
use crate::glm::{self, DesignMatrix, Family, GlmSpec, SolverOptions};
use crate::propensity::WeightSet;

/// Scale on which an arm's mean response is reported (nu).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmTransform {
    Identity,
    Logit,
}

/// How two arm-level quantities are contrasted (pi).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contrast {
    Difference,
    LogOddsRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectMetric {
    pub transform: ArmTransform,
    pub contrast: Contrast,
}

impl EffectMetric {
    pub const fn risk_difference() -> Self {
        Self {
            transform: ArmTransform::Identity,
            contrast: Contrast::Difference,
        }
    }

    pub const fn log_odds_ratio() -> Self {
        Self {
            transform: ArmTransform::Identity,
            contrast: Contrast::LogOddsRatio,
        }
    }

    pub fn check_family(&self, family: Family) -> Result<()> {
        let needs_binary = self.contrast == Contrast::LogOddsRatio || self.transform == ArmTransform::Logit;
        if needs_binary && family != Family::Bernoulli {
            return Err(Error::InvalidSpec(
                "log-odds metrics require bernoulli outcomes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Parametric,
    Nonparametric,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    Sandwich,
    Bootstrap,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "level", content = "scale")]
pub enum MetricTag {
    Arm(ArmTransform),
    Effect(EffectMetric),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub estimate: f64,
    /// Nonnegative; zero only for degenerate inputs (e.g. constant outcomes).
    pub std_error: f64,
    pub method: Method,
    pub variance_source: VarianceSource,
    pub metric: MetricTag,
    pub family: Family,
    /// Kish effective sample size of the weights involved.
    pub n_effective: f64,
}

fn check_arm(outcomes: &[f64], weights: &WeightSet) -> Result<()> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("arm has no subjects".into()));
    }
    if outcomes.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes, {} weights",
            outcomes.len(),
            weights.len()
        )));
    }
    if weights.values().iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(())
}

fn spec_for(family: Family) -> GlmSpec {
    match family {
        Family::Bernoulli => GlmSpec::bernoulli(),
        Family::Gaussian => GlmSpec::gaussian(),
    }
}

fn check_transform(family: Family, transform: ArmTransform) -> Result<()> {
    if transform == ArmTransform::Logit && family != Family::Bernoulli {
        return Err(Error::InvalidSpec("logit transform requires bernoulli outcomes".into()));
    }
    Ok(())
}

/// Weighted intercept-only fit: returns (alpha_hat, sandwich variance of alpha_hat).
fn fit_intercept(outcomes: &[f64], weights: &[f64], family: Family) -> Result<(f64, f64)> {
    let spec = spec_for(family);
    let x = DesignMatrix::intercept_only(outcomes.len());
    let fit = glm::fit_weighted_mle(&spec, outcomes, &x, weights, &SolverOptions::default())?;
    Ok((fit.coefficients[0], fit.model_covariance[(0, 0)]))
}

/// Parametric calibrated estimate of one arm's mean response on the `transform` scale.
pub fn calibrate_arm_parametric(
    outcomes: &[f64],
    weights: &WeightSet,
    family: Family,
    transform: ArmTransform,
) -> Result<CalibrationResult> {
    check_arm(outcomes, weights)?;
    check_transform(family, transform)?;
    let (alpha, var_alpha) = fit_intercept(outcomes, weights.values(), family)?;
    let se_alpha = var_alpha.sqrt();
    let (estimate, std_error) = match (family, transform) {
        (Family::Bernoulli, ArmTransform::Identity) => {
            let p = glm::expit(alpha);
            // d expit / d alpha = p (1 - p)
            (p, p * (1.0 - p) * se_alpha)
        }
        _ => (alpha, se_alpha),
    };
    Ok(CalibrationResult {
        estimate,
        std_error,
        method: Method::Parametric,
        variance_source: VarianceSource::Sandwich,
        metric: MetricTag::Arm(transform),
        family,
        n_effective: weights.diagnostics().effective_sample_size,
    })
}

/// `sum w y / sum w`.
pub fn weighted_mean(outcomes: &[f64], weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(outcomes.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total)
}

fn apply_transform(delta: f64, transform: ArmTransform) -> Result<f64> {
    match transform {
        ArmTransform::Identity => Ok(delta),
        ArmTransform::Logit => {
            if delta <= 0.0 || delta >= 1.0 {
                Err(Error::Boundary(format!("weighted mean {delta} has no finite logit")))
            } else {
                Ok(glm::logit(delta))
            }
        }
    }
}

/// Nonparametric calibrated estimate `nu(sum w y / sum w)` with a bootstrap
/// standard error from resampling (outcome, weight) pairs.
pub fn calibrate_arm_nonparametric(
    outcomes: &[f64],
    weights: &WeightSet,
    family: Family,
    transform: ArmTransform,
    opts: &BootstrapOptions,
) -> Result<CalibrationResult> {
    check_arm(outcomes, weights)?;
    check_transform(family, transform)?;
    let w = weights.values();
    let estimate = apply_transform(weighted_mean(outcomes, w)?, transform)?;
    let group: Vec<usize> = (0..outcomes.len()).collect();
    let summary = bootstrap::bootstrap(&[group], opts, |idx| {
        let y: Vec<f64> = idx.iter().map(|&i| outcomes[i]).collect();
        let ws: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        apply_transform(weighted_mean(&y, &ws)?, transform)
    })?;
    Ok(CalibrationResult {
        estimate,
        std_error: summary.std_error,
        method: Method::Nonparametric,
        variance_source: VarianceSource::Bootstrap,
        metric: MetricTag::Arm(transform),
        family,
        n_effective: weights.diagnostics().effective_sample_size,
    })
}

/// Logit-scale value and standard error of an arm result.
fn logit_scale(r: &CalibrationResult, transform: ArmTransform) -> Result<(f64, f64)> {
    match transform {
        ArmTransform::Logit => Ok((r.estimate, r.std_error)),
        ArmTransform::Identity => {
            let p = r.estimate;
            if p <= 0.0 || p >= 1.0 {
                return Err(Error::Boundary(format!("proportion {p} has no finite log-odds")));
            }
            // delta method: d logit(p) / dp = 1 / (p (1 - p))
            Ok((glm::logit(p), r.std_error / (p * (1.0 - p))))
        }
    }
}

/// Contrast of two arm-level results, `first` relative to `second`.
pub fn calibrated_effect(first: &CalibrationResult, second: &CalibrationResult, contrast: Contrast) -> Result<CalibrationResult> {
    let (MetricTag::Arm(t1), MetricTag::Arm(t2)) = (first.metric, second.metric) else {
        return Err(Error::InvalidInput("contrasts take two arm-level results".into()));
    };
    if t1 != t2 || first.family != second.family {
        return Err(Error::InvalidInput(
            "incompatible metric pairing: arms differ in scale or outcome family".into(),
        ));
    }
    if first.method != second.method || first.variance_source != second.variance_source {
        return Err(Error::InvalidInput(
            "incompatible metric pairing: arms estimated by different methods".into(),
        ));
    }
    let metric = EffectMetric {
        transform: t1,
        contrast,
    };
    metric.check_family(first.family)?;
    let (estimate, variance) = match contrast {
        Contrast::Difference => (
            first.estimate - second.estimate,
            first.std_error.powi(2) + second.std_error.powi(2),
        ),
        Contrast::LogOddsRatio => {
            let (l1, s1) = logit_scale(first, t1)?;
            let (l2, s2) = logit_scale(second, t2)?;
            (l1 - l2, s1 * s1 + s2 * s2)
        }
    };
    Ok(CalibrationResult {
        estimate,
        std_error: variance.sqrt(),
        method: first.method,
        variance_source: first.variance_source,
        metric: MetricTag::Effect(metric),
        family: first.family,
        n_effective: first.n_effective + second.n_effective,
    })
}

/// Per-stratum effects combined with target-population shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub effects: Vec<f64>,
    pub variances: Vec<f64>,
    pub target_shares: Vec<f64>,
    /// sum effect_l * share_l
    pub estimate: f64,
    /// sum variance_l * share_l^2
    pub variance: f64,
}

pub fn combine_strata(effects: &[f64], variances: &[f64], target_shares: &[f64]) -> Result<StratifiedEstimate> {
    if effects.is_empty() || effects.len() != variances.len() || effects.len() != target_shares.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} effects, {} variances, {} shares",
            effects.len(),
            variances.len(),
            target_shares.len()
        )));
    }
    let total: f64 = target_shares.iter().sum();
    if (total - 1.0).abs() > 1e-9 || target_shares.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidInput(format!("stratum shares sum to {total}, not 1")));
    }
    if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("stratum variances must be positive".into()));
    }
    let estimate = effects.iter().zip(target_shares).map(|(b, w)| b * w).sum();
    let variance = variances.iter().zip(target_shares).map(|(s, w)| s * w * w).sum();
    Ok(StratifiedEstimate {
        effects: effects.to_vec(),
        variances: variances.to_vec(),
        target_shares: target_shares.to_vec(),
        estimate,
        variance,
    })
}

impl StratifiedEstimate {
    pub fn to_result(&self, metric: EffectMetric, family: Family, n_effective: f64) -> CalibrationResult {
        CalibrationResult {
            estimate: self.estimate,
            std_error: self.variance.sqrt(),
            method: Method::Stratified,
            variance_source: VarianceSource::ClosedForm,
            metric: MetricTag::Effect(metric),
            family,
            n_effective,
        }
    }
}

/// Unweighted arm-0-vs-arm-1 effect and its variance (for one stratum or trial).
pub fn unweighted_effect(arm0: &[f64], arm1: &[f64], family: Family, metric: EffectMetric) -> Result<(f64, f64)> {
    metric.check_family(family)?;
    let a = calibrate_arm_parametric(arm0, &WeightSet::ones(arm0.len()), family, metric.transform)?;
    let b = calibrate_arm_parametric(arm1, &WeightSet::ones(arm1.len()), family, metric.transform)?;
    let e = calibrated_effect(&a, &b, metric.contrast)?;
    Ok((e.estimate, e.std_error * e.std_error))
}

/// What a bootstrap replicate (or a single evaluation) computes from a
/// dataset and its historical weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    ArmMean { arm: Arm, transform: ArmTransform },
    Effect(EffectMetric),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub method: Method,
    pub family: Family,
    pub target: Target,
}

impl Estimator {
    /// Point estimate on the historical subjects of `data`; `weights` is
    /// aligned with `data.indices(Trial::Historical)`.
    pub fn estimate(&self, data: &PooledDataset, weights: &WeightSet) -> Result<f64> {
        let hist = data.indices(Trial::Historical);
        if weights.len() != hist.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} historical subjects",
                weights.len(),
                hist.len()
            )));
        }
        let arm_point = |arm: Arm, transform: ArmTransform| -> Result<f64> {
            let pos: Vec<usize> = (0..hist.len()).filter(|&k| data.records()[hist[k]].arm == arm).collect();
            let y: Vec<f64> = pos.iter().map(|&k| data.records()[hist[k]].outcome).collect();
            let w: Vec<f64> = pos.iter().map(|&k| weights.values()[k]).collect();
            if y.is_empty() {
                return Err(Error::InvalidInput(format!("no historical subjects in arm {}", arm.index())));
            }
            check_transform(self.family, transform)?;
            match self.method {
                Method::Parametric => {
                    let (alpha, _) = fit_intercept(&y, &w, self.family)?;
                    match (self.family, transform) {
                        (Family::Bernoulli, ArmTransform::Identity) => Ok(glm::expit(alpha)),
                        _ => Ok(alpha),
                    }
                }
                Method::Nonparametric => apply_transform(weighted_mean(&y, &w)?, transform),
                Method::Stratified => Err(Error::InvalidInput(
                    "stratified estimates are built with combine_strata".into(),
                )),
            }
        };
        match self.target {
            Target::ArmMean { arm, transform } => arm_point(arm, transform),
            Target::Effect(metric) => {
                metric.check_family(self.family)?;
                let a = arm_point(Arm::Zero, metric.transform)?;
                let b = arm_point(Arm::One, metric.transform)?;
                match metric.contrast {
                    Contrast::Difference => Ok(a - b),
                    Contrast::LogOddsRatio => match metric.transform {
                        ArmTransform::Logit => Ok(a - b),
                        ArmTransform::Identity => Ok(apply_transform(a, ArmTransform::Logit)? - apply_transform(b, ArmTransform::Logit)?),
                    },
                }
            }
        }
    }
}
