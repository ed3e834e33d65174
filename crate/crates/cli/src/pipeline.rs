//! End-to-end analysis: ingest -> weights -> calibrated arms and effect ->
//! bootstrap -> noninferiority tests -> report.

use std::path::Path;

use ni_reweight::bootstrap::{self, WeightRecipe};
use ni_reweight::calibration::{self, CalibrationResult, EffectMetric, Estimator, Method, Target};
use ni_reweight::data::{category_code, Arm, PooledDataset, Trial};
use ni_reweight::ni_test::{self, NiInputs, StratumContrast};
use ni_reweight::propensity::{self, PropensityModel, WeightSet};
use ni_reweight::rng::RNG_ALGORITHM;
use sha2::{Digest, Sha256};

use crate::config::{resolve, AnalysisConfig, SeSource, WeightConfig};
use crate::error::{CliError, Result, StageExt};
use crate::ingest::{self, Ingested};
use crate::report::*;

pub struct Loaded {
    pub ingested: Ingested,
    pub inputs: Vec<InputDigest>,
}

fn read_input(path: &Path) -> Result<(Ingested, InputDigest)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let name = path.display().to_string();
    let ingested = ingest::ingest_reader(bytes.as_slice(), &name)?;
    let digest = InputDigest { path: name, sha256: hex::encode(Sha256::digest(&bytes)) };
    Ok((ingested, digest))
}

/// Reads the configured CSV files (relative paths are taken from `base`).
pub fn load_inputs(cfg: &AnalysisConfig, base: &Path) -> Result<Loaded> {
    let (mut ingested, first) = read_input(&resolve(base, &cfg.input.data))?;
    let mut inputs = vec![first];
    if let Some(current) = &cfg.input.current {
        let (other, digest) = read_input(&resolve(base, current))?;
        ingested = ingested.merge(other)?;
        inputs.push(digest);
    }
    ingested.check_family(cfg.analysis.family)?;
    Ok(Loaded { ingested, inputs })
}

fn provenance(cfg: &AnalysisConfig, inputs: Vec<InputDigest>) -> ReportProvenance {
    ReportProvenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.digest(),
        inputs,
        seed: cfg.bootstrap.seed,
        rng: RNG_ALGORITHM,
    }
}

/// Positions within the historical subjects, per arm.
fn arm_positions(data: &PooledDataset) -> [Vec<usize>; 2] {
    let hist = data.indices(Trial::Historical);
    Arm::BOTH.map(|arm| (0..hist.len()).filter(|&k| data.records()[hist[k]].arm == arm).collect())
}

fn category_codes(data: &PooledDataset, covariate: &str, positions: &[usize]) -> Result<Vec<i64>> {
    data.covariate_column(covariate, positions)
        .and_then(|v| v.into_iter().map(category_code).collect())
        .stage("weights")
}

fn propensity_report(model: &PropensityModel, data: &PooledDataset) -> Result<PropensityReport> {
    let p = model.predict(data).stage("propensity")?;
    let hist = data.indices(Trial::Historical);
    let range = hist.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(p[i]), hi.max(p[i])));
    Ok(PropensityReport {
        terms: model.fit.labels.clone(),
        coefficients: model.fit.coefficients.clone(),
        std_errors: model.fit.std_errors(),
        naive_std_errors: model.fit.naive_std_errors(),
        log_likelihood: model.fit.log_likelihood,
        iterations: model.fit.iterations,
        n_historical: model.n_historical,
        n_current: model.n_current,
        historical_propensity_range: range,
    })
}

/// Effect of arm 0 vs arm 1 among `positions` (any trial), unweighted.
fn subgroup_effect(data: &PooledDataset, positions: &[usize], cfg: &AnalysisConfig, stage: &'static str) -> Result<(f64, f64)> {
    let outcomes = |arm| -> Vec<f64> {
        positions.iter().filter(|&&i| data.records()[i].arm == arm).map(|&i| data.records()[i].outcome).collect()
    };
    calibration::unweighted_effect(&outcomes(Arm::Zero), &outcomes(Arm::One), cfg.analysis.family, cfg.analysis.metric.effect_metric())
        .stage(stage)
}

pub struct WeightStage {
    pub weights: WeightSet,
    pub recipe: WeightRecipe,
    pub report: WeightsReport,
}

/// Historical weights for the configured mode, plus their diagnostics.
pub fn weight_stage(cfg: &AnalysisConfig, data: &PooledDataset) -> Result<WeightStage> {
    let hist = data.indices(Trial::Historical);
    if hist.is_empty() {
        return Err(CliError::Validation("input has no historical (H) subjects".into()));
    }
    let mut target_shares = None;
    let mut propensity = None;
    let mut strata = None;
    let (weights, recipe) = match &cfg.weights {
        WeightConfig::Analytic { covariate, .. } => {
            let target = match cfg.target_shares() {
                Some(t) => t,
                None => {
                    let current = data.indices(Trial::Current);
                    if current.is_empty() {
                        return Err(CliError::Validation(
                            "analytic weights need target_shares or current-trial (C) rows".into(),
                        ));
                    }
                    propensity::empirical_shares(&category_codes(data, covariate, &current)?)
                }
            };
            target_shares = Some(target.clone());
            let recipe = WeightRecipe::Analytic { covariate: covariate.clone(), target_shares: target };
            let origin: Vec<usize> = (0..data.len()).collect();
            (recipe.weights_for(data, &origin).stage("weights")?, recipe)
        }
        WeightConfig::Propensity { trim, .. } => {
            let spec = cfg.weights.propensity_spec().expect("propensity mode");
            let model = propensity::fit_propensity(data, &spec).stage("propensity")?;
            propensity = Some(propensity_report(&model, data)?);
            let mut w = propensity::propensity_weights(&model, data).stage("propensity")?;
            if let Some((lo, hi)) = trim {
                w = propensity::trim_weights(&w, *lo, *hi).stage("weights")?;
            }
            (w, WeightRecipe::Propensity { spec, trim: *trim })
        }
        WeightConfig::Stratified { strata: n_strata, .. } => {
            let spec = cfg.weights.propensity_spec().expect("stratified mode");
            let model = propensity::fit_propensity(data, &spec).stage("propensity")?;
            propensity = Some(propensity_report(&model, data)?);
            let ratios = model.density_ratios(data).stage("propensity")?;
            let assignment = propensity::stratify(&ratios, data, *n_strata).stage("stratification")?;
            let w = assignment.stratum_weights(data);

            let mut rows = Vec::new();
            for l in 0..assignment.n_strata {
                let h = assignment.members(data, l, Trial::Historical);
                let c = assignment.members(data, l, Trial::Current);
                let (beta, var_beta) = subgroup_effect(data, &h, cfg, "stratification")?;
                let both_arms = |pos: &[usize]| Arm::BOTH.iter().all(|a| pos.iter().any(|&i| data.records()[i].arm == *a));
                let current = if both_arms(&c) { subgroup_effect(data, &c, cfg, "stratification").ok() } else { None };
                rows.push(StratumRow {
                    stratum: l,
                    n_historical: h.len(),
                    n_current: c.len(),
                    historical_effect: beta,
                    historical_variance: var_beta,
                    current_effect: current.map(|c| c.0),
                    current_variance: current.map(|c| c.1),
                });
            }
            let combined = calibration::combine_strata(
                &rows.iter().map(|r| r.historical_effect).collect::<Vec<_>>(),
                &rows.iter().map(|r| r.historical_variance).collect::<Vec<_>>(),
                &assignment.current_shares,
            )
            .stage("stratification")?;
            strata = Some(StrataReport {
                n_strata: assignment.n_strata,
                historical_shares: assignment.historical_shares.clone(),
                current_shares: assignment.current_shares.clone(),
                strata: rows,
                combined,
            });
            let mut per_record = vec![0.0; data.len()];
            for (&i, &v) in hist.iter().zip(w.values()) {
                per_record[i] = v;
            }
            (w, WeightRecipe::Fixed { weights: per_record })
        }
    };
    let by_arm = arm_positions(data).map(|pos| weights.select(&pos).diagnostics());
    let report = WeightsReport {
        mode: cfg.weights.mode_name(),
        provenance: weights.provenance(),
        trim_bounds: weights.trim_bounds(),
        target_shares,
        overall: weights.diagnostics(),
        by_arm,
        propensity,
        strata,
    };
    Ok(WeightStage { weights, recipe, report })
}

fn arm_results(cfg: &AnalysisConfig, data: &PooledDataset, weights: &WeightSet) -> Result<[CalibrationResult; 2]> {
    let hist = data.indices(Trial::Historical);
    let [a, b] = arm_positions(data);
    let fit = |pos: &[usize]| {
        if pos.is_empty() {
            return Err(CliError::Validation("a historical arm has no subjects".into()));
        }
        let y: Vec<f64> = pos.iter().map(|&k| data.records()[hist[k]].outcome).collect();
        calibration::calibrate_arm_parametric(&y, &weights.select(pos), cfg.analysis.family, cfg.analysis.metric.effect_metric().transform)
            .stage("calibration")
    };
    Ok([fit(&a)?, fit(&b)?])
}

fn current_effect(cfg: &AnalysisConfig, data: &PooledDataset) -> Result<Option<CurrentEffect>> {
    if let (Some(mu_tc), Some(se_tc)) = (cfg.ni.mu_tc, cfg.ni.se_tc) {
        return Ok(Some(CurrentEffect { mu_tc, se_tc, source: CurrentSource::Config }));
    }
    let current = data.indices(Trial::Current);
    let has_both = Arm::BOTH.iter().all(|a| current.iter().any(|&i| data.records()[i].arm == *a));
    if !has_both {
        return Ok(None);
    }
    let (mu_tc, var) = subgroup_effect(data, &current, cfg, "current trial")?;
    Ok(Some(CurrentEffect { mu_tc, se_tc: var.sqrt(), source: CurrentSource::Data }))
}

fn ni_pair(current: &CurrentEffect, mu_cp: f64, se_cp: f64, alpha: f64) -> Result<NiPair> {
    let inputs = NiInputs::new(current.mu_tc, current.se_tc, mu_cp, se_cp, alpha).stage("ni test")?;
    Ok(NiPair {
        inputs,
        synthesis: ni_test::synthesis_test(&inputs).stage("ni test")?,
        fixed_margin: ni_test::fixed_margin_test(&inputs).stage("ni test")?,
    })
}

fn stratified_ni(strata: &StrataReport, alpha: f64) -> Result<Option<ni_reweight::ni_test::StratifiedNiResult>> {
    let contrasts: Option<Vec<StratumContrast>> = strata
        .strata
        .iter()
        .zip(&strata.current_shares)
        .map(|(row, &weight)| {
            Some(StratumContrast {
                gamma: row.current_effect?,
                var_current: row.current_variance?,
                // beta_l enters as a subtraction; the historical effect is placebo vs control
                beta: -row.historical_effect,
                var_historical: row.historical_variance,
                weight,
            })
        })
        .collect();
    match contrasts {
        Some(c) => ni_test::stratified_test(&c, alpha).stage("ni test").map(Some),
        None => Ok(None),
    }
}

/// Runs every stage on already-loaded data.
pub fn analyze(cfg: &AnalysisConfig, loaded: Loaded) -> Result<Report> {
    let data = &loaded.ingested.data;
    let metric: EffectMetric = cfg.analysis.metric.effect_metric();
    metric.check_family(cfg.analysis.family).stage("configuration")?;

    let stage = weight_stage(cfg, data)?;
    let hist_n = data.count(Trial::Historical);
    let calibrated = arm_results(cfg, data, &stage.weights)?;
    let uncalibrated = arm_results(cfg, data, &WeightSet::ones(hist_n))?;
    let effect_cal = calibration::calibrated_effect(&calibrated[0], &calibrated[1], metric.contrast).stage("calibration")?;
    let effect_unc = calibration::calibrated_effect(&uncalibrated[0], &uncalibrated[1], metric.contrast).stage("calibration")?;

    let boot = if cfg.bootstrap.enabled {
        let estimator = Estimator { method: Method::Parametric, family: cfg.analysis.family, target: Target::Effect(metric) };
        Some(bootstrap::bootstrap_ci(data, &stage.recipe, &estimator, &cfg.bootstrap_options()).stage("bootstrap")?)
    } else {
        None
    };

    let current = current_effect(cfg, data)?;
    let ni_tests = match &current {
        Some(cur) => {
            let se_adj = match (cfg.ni.se_source, &boot) {
                (SeSource::Bootstrap, Some(b)) => b.std_error,
                _ => effect_cal.std_error,
            };
            let stratified = match &stage.report.strata {
                Some(s) => stratified_ni(s, cfg.ni.alpha)?,
                None => None,
            };
            Some(NiReport {
                alpha: cfg.ni.alpha,
                se_source: cfg.ni.se_source,
                unadjusted: ni_pair(cur, effect_unc.estimate, effect_unc.std_error, cfg.ni.alpha)?,
                adjusted: ni_pair(cur, effect_cal.estimate, se_adj, cfg.ni.alpha)?,
                stratified,
            })
        }
        None => None,
    };

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        provenance: provenance(cfg, loaded.inputs),
        data: ingest::summarize(data),
        weights: stage.report,
        arms: ArmsReport { uncalibrated, calibrated },
        effect: EffectReport { metric, uncalibrated: effect_unc, calibrated: effect_cal, bootstrap: boot },
        current_trial: current,
        ni_tests,
    })
}

pub fn run_pipeline(cfg: &AnalysisConfig, base: &Path) -> Result<Report> {
    let loaded = load_inputs(cfg, base)?;
    analyze(cfg, loaded)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WeightsOnlyReport {
    pub schema_version: &'static str,
    pub provenance: ReportProvenance,
    pub data: ingest::IngestSummary,
    pub weights: WeightsReport,
}

/// The weighting stage alone (propensity fit and weight diagnostics).
pub fn run_weights(cfg: &AnalysisConfig, base: &Path) -> Result<WeightsOnlyReport> {
    let loaded = load_inputs(cfg, base)?;
    let data = &loaded.ingested.data;
    let stage = weight_stage(cfg, data)?;
    Ok(WeightsOnlyReport {
        schema_version: SCHEMA_VERSION,
        data: ingest::summarize(data),
        weights: stage.report,
        provenance: provenance(cfg, loaded.inputs),
    })
}

