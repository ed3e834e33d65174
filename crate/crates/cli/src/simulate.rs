//! `simulate` and `replicate` subcommands.

use std::path::Path;

use ni_reweight::calibration::EffectMetric;
use ni_reweight::data::PooledDataset;
use ni_reweight::propensity::PropensitySpec;
use ni_reweight::rng::RNG_ALGORITHM;
use ni_reweight::sim::{self, ReplicationAnalysis, ReplicationSummary, SimConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result, StageExt};
use crate::ingest::{self, IngestSummary};
use crate::report::SCHEMA_VERSION;

pub fn load_sim_config(path: Option<&Path>) -> Result<SimConfig> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: SimConfig =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    cfg.validate().stage("simulation config")?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truths {
    pub target_log_odds_ratio: f64,
    pub source_log_odds_ratio: f64,
    pub target_risk_difference: f64,
    pub source_risk_difference: f64,
}

impl Truths {
    pub fn of(cfg: &SimConfig) -> Self {
        let (lor, rd) = (EffectMetric::log_odds_ratio(), EffectMetric::risk_difference());
        Self {
            target_log_odds_ratio: cfg.target_effect(lor),
            source_log_odds_ratio: cfg.source_effect(lor),
            target_risk_difference: cfg.target_effect(rd),
            source_risk_difference: cfg.source_effect(rd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub schema_version: &'static str,
    pub rng: &'static str,
    pub stream: u64,
    pub config: SimConfig,
    pub truth: Truths,
    pub data: IngestSummary,
}

/// Draws one pool (stream `stream` of the configured seed).
pub fn simulate(cfg: &SimConfig, stream: u64) -> Result<(PooledDataset, SimulateReport)> {
    let pool = sim::generate_pool_stream(cfg, stream).stage("simulation")?;
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        rng: RNG_ALGORITHM,
        stream,
        config: cfg.clone(),
        truth: Truths::of(cfg),
        data: ingest::summarize(&pool),
    };
    Ok((pool, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateReport {
    pub schema_version: &'static str,
    pub config_sha256: String,
    pub config: SimConfig,
    pub analysis: ReplicationAnalysis,
    pub truth: Truths,
    pub summary: ReplicationSummary,
}

pub fn replicate(cfg: &SimConfig, replications: usize, analysis: &ReplicationAnalysis) -> Result<ReplicateReport> {
    let summary = sim::run_replication_study(cfg, replications, analysis).stage("replication")?;
    let canonical = serde_json::to_vec(&(cfg, analysis, replications)).expect("config serializes");
    Ok(ReplicateReport {
        schema_version: SCHEMA_VERSION,
        config_sha256: hex::encode(Sha256::digest(&canonical)),
        config: cfg.clone(),
        analysis: analysis.clone(),
        truth: Truths::of(cfg),
        summary,
    })
}

pub fn analysis_from_flags(covariates: Option<Vec<String>>, trim: Option<Vec<f64>>, metric: EffectMetric) -> ReplicationAnalysis {
    let base = ReplicationAnalysis::default();
    ReplicationAnalysis {
        propensity: covariates.map_or(base.propensity, |c| PropensitySpec::main_effects(&c)),
        trim: trim.map(|t| (t[0], t[1])),
        metric,
        execution: base.execution,
    }
}
