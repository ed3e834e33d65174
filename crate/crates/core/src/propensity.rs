//! Calibration weights r(x) = f*(x)/f(x) for historical subjects.
//!
//! Weights come either from known category shares of the two populations or
//! from a logistic model of trial membership fitted on the pooled data, where
//! r(x) is the predicted odds of belonging to the current trial times n_h/n_c.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{PooledDataset, Trial};
use crate::error::{Error, Result};
use crate::glm::{self, DesignMatrix, FitResult, GlmSpec, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AnalyticRatio,
    PropensityOdds,
    Trimmed,
    StratumConstant,
}

/// Nonnegative weights for an ordered list of historical subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    values: Vec<f64>,
    provenance: Provenance,
    trim_bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sum: f64,
    /// (sum w)^2 / sum w^2
    pub effective_sample_size: f64,
}

impl WeightSet {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if provenance == Provenance::Trimmed {
            return Err(Error::InvalidInput(
                "trimmed weights are produced by trim_weights".into(),
            ));
        }
        Self::checked(values, provenance, None)
    }

    /// All-ones weights: the historical and target populations coincide.
    pub fn ones(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
            provenance: Provenance::AnalyticRatio,
            trim_bounds: None,
        }
    }

    fn checked(values: Vec<f64>, provenance: Provenance, trim_bounds: Option<(f64, f64)>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidWeight { index, value });
        }
        Ok(Self {
            values,
            provenance,
            trim_bounds,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn trim_bounds(&self) -> Option<(f64, f64)> {
        self.trim_bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weights at the given positions, same provenance.
    pub fn select(&self, positions: &[usize]) -> WeightSet {
        WeightSet {
            values: positions.iter().map(|&i| self.values[i]).collect(),
            provenance: self.provenance,
            trim_bounds: self.trim_bounds,
        }
    }

    pub fn diagnostics(&self) -> WeightDiagnostics {
        let sum: f64 = self.values.iter().sum();
        let sum_sq: f64 = self.values.iter().map(|v| v * v).sum();
        let count = self.values.len();
        WeightDiagnostics {
            count,
            min: self.values.iter().copied().fold(f64::INFINITY, f64::min),
            max: self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: sum / count as f64,
            sum,
            effective_sample_size: if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 },
        }
    }
}

fn check_shares(name: &str, shares: &BTreeMap<i64, f64>) -> Result<()> {
    if shares.values().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidInput(format!("{name} shares must lie in [0, 1]")));
    }
    let total: f64 = shares.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{name} shares sum to {total}, not 1")));
    }
    Ok(())
}

/// Share of each category among `categories`.
pub fn empirical_shares(categories: &[i64]) -> BTreeMap<i64, f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &c in categories {
        *counts.entry(c).or_default() += 1;
    }
    let n = categories.len() as f64;
    counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect()
}

/// `r = target share / source share` of each subject's category.
///
/// Categories absent from `target` get weight 0.
pub fn analytic_weights(
    categories: &[i64],
    target: &BTreeMap<i64, f64>,
    source: &BTreeMap<i64, f64>,
) -> Result<WeightSet> {
    check_shares("target", target)?;
    check_shares("source", source)?;
    for (&c, &p) in target {
        if p > 0.0 && source.get(&c).copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::UnsupportedPopulation(c));
        }
    }
    let values = categories
        .iter()
        .map(|c| {
            let t = target.get(c).copied().unwrap_or(0.0);
            if t == 0.0 {
                return Ok(0.0);
            }
            match source.get(c) {
                Some(&s) if s > 0.0 => Ok(t / s),
                _ => Err(Error::UnsupportedPopulation(*c)),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    WeightSet::new(values, Provenance::AnalyticRatio)
}

/// Terms of the trial-membership model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropensitySpec {
    pub covariates: Vec<String>,
    /// Pairwise products, opt-in.
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
}

impl PropensitySpec {
    pub fn main_effects<S: AsRef<str>>(covariates: &[S]) -> Self {
        Self {
            covariates: covariates.iter().map(|s| s.as_ref().to_string()).collect(),
            interactions: Vec::new(),
        }
    }
}

/// Logistic regression of current-trial membership on covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub fit: FitResult,
    pub spec: PropensitySpec,
    pub n_historical: usize,
    pub n_current: usize,
}

const COVARIATE_WARNING_THRESHOLD: usize = 10;

fn design_for(pooled: &PooledDataset, spec: &PropensitySpec) -> Result<DesignMatrix> {
    let all: Vec<usize> = (0..pooled.len()).collect();
    let mut columns = Vec::new();
    for name in &spec.covariates {
        columns.push((name.clone(), pooled.covariate_column(name, &all)?));
    }
    for (a, b) in &spec.interactions {
        let xa = pooled.covariate_column(a, &all)?;
        let xb = pooled.covariate_column(b, &all)?;
        columns.push((format!("{a}:{b}"), xa.iter().zip(&xb).map(|(u, v)| u * v).collect()));
    }
    DesignMatrix::from_columns(pooled.len(), true, &columns)
}

pub fn fit_propensity(pooled: &PooledDataset, spec: &PropensitySpec) -> Result<PropensityModel> {
    pooled.require_both_trials()?;
    if spec.covariates.len() > COVARIATE_WARNING_THRESHOLD {
        log::warn!(
            "{} covariates in the propensity model; restricting it to effect modifiers limits extreme weights",
            spec.covariates.len()
        );
    }
    let all: Vec<usize> = (0..pooled.len()).collect();
    for name in &spec.covariates {
        let col = pooled.covariate_column(name, &all)?;
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::InvalidInput(format!(
                "covariate {name:?} is constant across the pool"
            )));
        }
    }
    let x = design_for(pooled, spec)?;
    let y: Vec<f64> = pooled
        .records()
        .iter()
        .map(|r| if r.trial == Trial::Current { 1.0 } else { 0.0 })
        .collect();
    let fit = glm::fit_weighted_mle(&GlmSpec::bernoulli(), &y, &x, &vec![1.0; y.len()], &SolverOptions::default())?;
    Ok(PropensityModel {
        fit,
        spec: spec.clone(),
        n_historical: pooled.count(Trial::Historical),
        n_current: pooled.count(Trial::Current),
    })
}

impl PropensityModel {
    /// Predicted probability of current-trial membership for every record.
    pub fn predict(&self, pooled: &PooledDataset) -> Result<Vec<f64>> {
        let x = design_for(pooled, &self.spec)?;
        Ok(x.linear_predictor(&self.fit.coefficients).into_iter().map(glm::expit).collect())
    }

    /// r(x) = p/(1-p) * n_h/n_c for every record of `pooled`.
    pub fn density_ratios(&self, pooled: &PooledDataset) -> Result<Vec<f64>> {
        if pooled.count(Trial::Historical) != self.n_historical || pooled.count(Trial::Current) != self.n_current {
            return Err(Error::InvalidInput(
                "propensity model was fitted on a different pool".into(),
            ));
        }
        let scale = self.n_historical as f64 / self.n_current as f64;
        self.predict(pooled)?
            .into_iter()
            .enumerate()
            .map(|(index, p)| {
                if p <= 0.0 || p >= 1.0 {
                    Err(Error::DegeneratePropensity { index, value: p })
                } else {
                    Ok(p / (1.0 - p) * scale)
                }
            })
            .collect()
    }
}

/// Weights for the historical subjects of `pooled`, in dataset order.
pub fn propensity_weights(model: &PropensityModel, pooled: &PooledDataset) -> Result<WeightSet> {
    let ratios = model.density_ratios(pooled)?;
    let values = pooled.indices(Trial::Historical).into_iter().map(|i| ratios[i]).collect();
    WeightSet::new(values, Provenance::PropensityOdds)
}

/// Clamps every weight into `[lower, upper]`.
pub fn trim_weights(w: &WeightSet, lower: f64, upper: f64) -> Result<WeightSet> {
    if !(lower > 0.0 && lower < upper && upper.is_finite()) {
        return Err(Error::InvalidBounds { lower, upper });
    }
    let values = w.values.iter().map(|v| v.clamp(lower, upper)).collect();
    WeightSet::checked(values, Provenance::Trimmed, Some((lower, upper)))
}

/// Quantile strata of r(x) over the pooled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataAssignment {
    /// 0-based stratum per pooled record.
    pub stratum: Vec<usize>,
    pub n_strata: usize,
    /// w_lh: share of historical subjects in each stratum.
    pub historical_shares: Vec<f64>,
    /// w_ln: share of current-trial subjects in each stratum.
    pub current_shares: Vec<f64>,
}

/// Sorts the pooled subjects by r(x) (stable, so ties keep input order) and
/// cuts the ranking into `n_strata` groups of equal size (within one subject).
pub fn stratify(ratios: &[f64], pooled: &PooledDataset, n_strata: usize) -> Result<StrataAssignment> {
    if ratios.len() != pooled.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ratios for {} pooled subjects",
            ratios.len(),
            pooled.len()
        )));
    }
    if n_strata == 0 {
        return Err(Error::InvalidInput("need at least one stratum".into()));
    }
    if let Some((index, &value)) = ratios.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidWeight { index, value });
    }
    pooled.require_both_trials()?;
    let mut distinct = ratios.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < n_strata {
        return Err(Error::DegenerateStratification(format!(
            "{} distinct r(x) values for {n_strata} strata",
            distinct.len()
        )));
    }

    let n = ratios.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]));
    let mut stratum = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        stratum[i] = rank * n_strata / n;
    }

    let n_h = pooled.count(Trial::Historical) as f64;
    let n_c = pooled.count(Trial::Current) as f64;
    let mut historical_shares = vec![0.0; n_strata];
    let mut current_shares = vec![0.0; n_strata];
    for (r, &s) in pooled.records().iter().zip(&stratum) {
        match r.trial {
            Trial::Historical => historical_shares[s] += 1.0 / n_h,
            Trial::Current => current_shares[s] += 1.0 / n_c,
        }
    }
    if let Some(l) = historical_shares.iter().position(|&s| s == 0.0) {
        return Err(Error::DegenerateStratification(format!(
            "stratum {} has no historical subjects",
            l + 1
        )));
    }
    Ok(StrataAssignment {
        stratum,
        n_strata,
        historical_shares,
        current_shares,
    })
}

impl StrataAssignment {
    /// Stratum-constant weights w_ln / w_lh for the historical subjects.
    pub fn stratum_weights(&self, pooled: &PooledDataset) -> WeightSet {
        let values = pooled
            .indices(Trial::Historical)
            .into_iter()
            .map(|i| {
                let l = self.stratum[i];
                self.current_shares[l] / self.historical_shares[l]
            })
            .collect();
        WeightSet {
            values,
            provenance: Provenance::StratumConstant,
            trim_bounds: None,
        }
    }

    /// Positions of the subjects of `trial` in stratum `l`.
    pub fn members(&self, pooled: &PooledDataset, l: usize, trial: Trial) -> Vec<usize> {
        pooled
            .records()
            .iter()
            .enumerate()
            .filter(|(i, r)| r.trial == trial && self.stratum[*i] == l)
            .map(|(i, _)| i)
            .collect()
    }
}
