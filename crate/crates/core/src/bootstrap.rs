//! Nonparametric bootstrap with per-replicate random streams.
//!
//! Subjects are resampled with replacement within groups (trial x arm), and
//! replicate `b` always draws from stream `b` of the seeded generator, so the
//! summary does not depend on thread count or scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::Estimator;
use crate::data::{category_code, Arm, PooledDataset, Trial};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::propensity::{self, PropensitySpec, WeightSet};
use crate::rng;

pub const MIN_REPLICATES: usize = 100;
const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Coverage of the percentile interval.
    pub level: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 2000,
            seed: 2013,
            level: 0.95,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Standard deviation of the successful replicate estimates.
    pub std_error: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One resample: each group is replaced by as many draws from itself.
pub fn resample_groups<R: Rng>(groups: &[Vec<usize>], rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(groups.iter().map(Vec::len).sum());
    for g in groups {
        for _ in 0..g.len() {
            out.push(g[rng.random_range(0..g.len())]);
        }
    }
    out
}

/// Runs `statistic` on `opts.replicates` stratified resamples of `groups`.
///
/// Replicates where the statistic errors or is not finite count as failures;
/// more than 5% failures is an error.
pub fn bootstrap<F>(groups: &[Vec<usize>], opts: &BootstrapOptions, statistic: F) -> Result<BootstrapSummary>
where
    F: Fn(&[usize]) -> Result<f64> + Sync + Send,
{
    if opts.replicates < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            opts.replicates
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidInput(format!("interval level {} outside (0, 1)", opts.level)));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput("empty resampling group".into()));
    }
    let draws: Vec<Option<f64>> = par::map_indices(opts.execution, opts.replicates, |b| {
        let mut rng = rng::substream(opts.seed, b as u64);
        let idx = resample_groups(groups, &mut rng);
        statistic(&idx).ok().filter(|v| v.is_finite())
    });
    let mut values: Vec<f64> = draws.iter().flatten().copied().collect();
    let failures = opts.replicates - values.len();
    if failures as f64 > MAX_FAILURE_FRACTION * opts.replicates as f64 {
        return Err(Error::UnstableBootstrap {
            failed: failures,
            total: opts.replicates,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - opts.level) / 2.0;
    Ok(BootstrapSummary {
        std_error: var.sqrt(),
        mean,
        lower: quantile(&values, tail),
        upper: quantile(&values, 1.0 - tail),
        level: opts.level,
        replicates: opts.replicates,
        failures,
        seed: opts.seed,
    })
}

/// How historical weights are obtained for a (re)sampled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightRecipe {
    /// Every historical weight is 1.
    Unit,
    /// One fixed weight per record of the original dataset; resampled subjects carry theirs.
    Fixed { weights: Vec<f64> },
    /// Target category shares are fixed; source shares are the empirical
    /// within-arm shares of the (re)sampled historical subjects.
    Analytic {
        covariate: String,
        target_shares: BTreeMap<i64, f64>,
    },
    /// Trial-membership model refit on every (re)sample.
    Propensity {
        spec: PropensitySpec,
        trim: Option<(f64, f64)>,
    },
}

impl WeightRecipe {
    /// Weights for `data.indices(Trial::Historical)`. `origin[i]` is the
    /// position in the original dataset that record `i` of `data` came from.
    pub fn weights_for(&self, data: &PooledDataset, origin: &[usize]) -> Result<WeightSet> {
        let hist = data.indices(Trial::Historical);
        match self {
            WeightRecipe::Unit => Ok(WeightSet::ones(hist.len())),
            WeightRecipe::Fixed { weights } => WeightSet::new(
                hist.iter().map(|&i| weights[origin[i]]).collect(),
                propensity::Provenance::AnalyticRatio,
            ),
            WeightRecipe::Analytic {
                covariate,
                target_shares,
            } => {
                let codes = data
                    .covariate_column(covariate, &hist)?
                    .into_iter()
                    .map(category_code)
                    .collect::<Result<Vec<i64>>>()?;
                let mut values = vec![0.0; hist.len()];
                for arm in Arm::BOTH {
                    let pos: Vec<usize> = (0..hist.len()).filter(|&k| data.records()[hist[k]].arm == arm).collect();
                    if pos.is_empty() {
                        continue;
                    }
                    let arm_codes: Vec<i64> = pos.iter().map(|&k| codes[k]).collect();
                    let source = propensity::empirical_shares(&arm_codes);
                    let w = propensity::analytic_weights(&arm_codes, target_shares, &source)?;
                    for (&k, &v) in pos.iter().zip(w.values()) {
                        values[k] = v;
                    }
                }
                WeightSet::new(values, propensity::Provenance::AnalyticRatio)
            }
            WeightRecipe::Propensity { spec, trim } => {
                let model = propensity::fit_propensity(data, spec)?;
                let w = propensity::propensity_weights(&model, data)?;
                match trim {
                    Some((lo, hi)) => propensity::trim_weights(&w, *lo, *hi),
                    None => Ok(w),
                }
            }
        }
    }

    fn needs_current_trial(&self) -> bool {
        matches!(self, WeightRecipe::Propensity { .. })
    }
}

/// Resampling groups: historical arms, plus current-trial arms when the
/// weights are refit from the pool.
pub fn resampling_groups(data: &PooledDataset, include_current: bool) -> Vec<Vec<usize>> {
    let mut trials = vec![Trial::Historical];
    if include_current {
        trials.push(Trial::Current);
    }
    trials
        .into_iter()
        .flat_map(|t| Arm::BOTH.map(|a| data.arm_indices(t, a)))
        .filter(|g| !g.is_empty())
        .collect()
}

/// Bootstrap standard error and percentile interval of `estimator`, redoing
/// the weight `recipe` inside every replicate.
pub fn bootstrap_ci(
    data: &PooledDataset,
    recipe: &WeightRecipe,
    estimator: &Estimator,
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary> {
    if let WeightRecipe::Fixed { weights } = recipe {
        if weights.len() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} fixed weights for {} records",
                weights.len(),
                data.len()
            )));
        }
    }
    let groups = resampling_groups(data, recipe.needs_current_trial());
    bootstrap(&groups, opts, |idx| {
        let sample = data.subset(idx);
        let w = recipe.weights_for(&sample, idx)?;
        estimator.estimate(&sample, &w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{ArmTransform, Method, Target};
    use crate::data::SubjectRecord;
    use crate::glm::Family;

    #[test]
    fn too_few_replicates() {
        let opts = BootstrapOptions { replicates: 50, ..Default::default() };
        assert!(bootstrap(&[vec![0, 1]], &opts, |_| Ok(1.0)).is_err());
    }

    #[test]
    fn failures_accounted() {
        let opts = BootstrapOptions { replicates: 200, ..Default::default() };
        // fails whenever index 0 is drawn first: ~1/2 of replicates
        let err = bootstrap(&[vec![0, 1]], &opts, |idx| {
            if idx[0] == 0 {
                Err(Error::ZeroWeights)
            } else {
                Ok(1.0)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::UnstableBootstrap { total: 200, .. }));
    }

    #[test]
    fn identical_subjects_have_zero_se() {
        let recs: Vec<SubjectRecord> = (0..30)
            .map(|i| SubjectRecord {
                id: i.to_string(),
                trial: Trial::Historical,
                arm: if i < 15 { Arm::Zero } else { Arm::One },
                outcome: 0.5,
                covariates: vec![1.0],
            })
            .collect();
        let data = PooledDataset::new(vec!["x".into()], recs).unwrap();
        let est = Estimator {
            method: Method::Nonparametric,
            family: Family::Gaussian,
            target: Target::ArmMean { arm: Arm::Zero, transform: ArmTransform::Identity },
        };
        let opts = BootstrapOptions { replicates: 100, ..Default::default() };
        let s = bootstrap_ci(&data, &WeightRecipe::Unit, &est, &opts).unwrap();
        assert_eq!(s.std_error, 0.0);
        assert_eq!((s.lower, s.upper), (0.5, 0.5));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
