//! JSON report schema. Field order is fixed by the struct definitions and no
//! timestamps are recorded, so equal inputs give byte-identical reports.

use std::collections::BTreeMap;

use ni_reweight::bootstrap::BootstrapSummary;
use ni_reweight::calibration::{CalibrationResult, EffectMetric, StratifiedEstimate};
use ni_reweight::ni_test::{NiInputs, NiTestResult, StratifiedNiResult};
use ni_reweight::propensity::{Provenance, WeightDiagnostics};
use serde::Serialize;

use crate::config::SeSource;
use crate::ingest::IngestSummary;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportProvenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub rng: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityReport {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Sandwich standard errors.
    pub std_errors: Vec<f64>,
    pub naive_std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub n_historical: usize,
    pub n_current: usize,
    /// Range of fitted current-trial membership probabilities among historical subjects.
    pub historical_propensity_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRow {
    pub stratum: usize,
    pub n_historical: usize,
    pub n_current: usize,
    /// Historical arm 0 vs arm 1 effect within the stratum.
    pub historical_effect: f64,
    pub historical_variance: f64,
    pub current_effect: Option<f64>,
    pub current_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrataReport {
    pub n_strata: usize,
    pub historical_shares: Vec<f64>,
    pub current_shares: Vec<f64>,
    pub strata: Vec<StratumRow>,
    pub combined: StratifiedEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightsReport {
    pub mode: &'static str,
    pub provenance: Provenance,
    pub trim_bounds: Option<(f64, f64)>,
    pub target_shares: Option<BTreeMap<i64, f64>>,
    pub overall: WeightDiagnostics,
    pub by_arm: [WeightDiagnostics; 2],
    pub propensity: Option<PropensityReport>,
    pub strata: Option<StrataReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmsReport {
    pub uncalibrated: [CalibrationResult; 2],
    pub calibrated: [CalibrationResult; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectReport {
    pub metric: EffectMetric,
    pub uncalibrated: CalibrationResult,
    pub calibrated: CalibrationResult,
    /// Bootstrap of the calibrated effect, weights recomputed per replicate.
    pub bootstrap: Option<BootstrapSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentSource {
    Config,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentEffect {
    pub mu_tc: f64,
    pub se_tc: f64,
    pub source: CurrentSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiPair {
    pub inputs: NiInputs,
    pub synthesis: NiTestResult,
    pub fixed_margin: NiTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiReport {
    pub alpha: f64,
    pub se_source: SeSource,
    pub unadjusted: NiPair,
    pub adjusted: NiPair,
    /// Present for stratified weights when current-trial outcomes are available.
    pub stratified: Option<StratifiedNiResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub provenance: ReportProvenance,
    pub data: IngestSummary,
    pub weights: WeightsReport,
    pub arms: ArmsReport,
    pub effect: EffectReport,
    pub current_trial: Option<CurrentEffect>,
    pub ni_tests: Option<NiReport>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
