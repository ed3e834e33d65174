//! Declarative analysis configuration (TOML) with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ni_reweight::bootstrap::BootstrapOptions;
use ni_reweight::calibration::EffectMetric;
use ni_reweight::glm::Family;
use ni_reweight::par::Execution;
use ni_reweight::propensity::PropensitySpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    RiskDifference,
    LogOddsRatio,
}

impl MetricName {
    pub fn effect_metric(self) -> EffectMetric {
        match self {
            MetricName::RiskDifference => EffectMetric::risk_difference(),
            MetricName::LogOddsRatio => EffectMetric::log_odds_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// CSV with historical rows (and optionally current-trial rows).
    pub data: PathBuf,
    /// Optional second CSV, typically the current trial.
    #[serde(default)]
    pub current: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default = "default_metric")]
    pub metric: MetricName,
    #[serde(default)]
    pub execution: Execution,
}

fn default_family() -> Family {
    Family::Bernoulli
}

fn default_metric() -> MetricName {
    MetricName::LogOddsRatio
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            family: default_family(),
            metric: default_metric(),
            execution: Execution::Parallel,
        }
    }
}

/// Exactly one weighting scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    /// r = target share / source share of a categorical covariate.
    Analytic {
        covariate: String,
        /// Category code -> share. Omitted: empirical shares of the current trial.
        #[serde(default)]
        target_shares: Option<BTreeMap<String, f64>>,
    },
    /// Odds of current-trial membership from a logistic model.
    Propensity {
        covariates: Vec<String>,
        #[serde(default)]
        interactions: Vec<(String, String)>,
        #[serde(default)]
        trim: Option<(f64, f64)>,
    },
    /// Quantile strata of the propensity density ratio.
    Stratified {
        covariates: Vec<String>,
        #[serde(default)]
        interactions: Vec<(String, String)>,
        #[serde(default = "default_strata")]
        strata: usize,
    },
}

fn default_strata() -> usize {
    5
}

impl WeightConfig {
    pub fn mode_name(&self) -> &'static str {
        match self {
            WeightConfig::Analytic { .. } => "analytic",
            WeightConfig::Propensity { .. } => "propensity",
            WeightConfig::Stratified { .. } => "stratified",
        }
    }

    pub fn propensity_spec(&self) -> Option<PropensitySpec> {
        match self {
            WeightConfig::Propensity { covariates, interactions, .. }
            | WeightConfig::Stratified { covariates, interactions, .. } => Some(PropensitySpec {
                covariates: covariates.clone(),
                interactions: interactions.clone(),
            }),
            WeightConfig::Analytic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn yes() -> bool {
    true
}
fn default_replicates() -> usize {
    BootstrapOptions::default().replicates
}
fn default_seed() -> u64 {
    BootstrapOptions::default().seed
}
fn default_level() -> f64 {
    BootstrapOptions::default().level
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            replicates: default_replicates(),
            seed: default_seed(),
            level: default_level(),
        }
    }
}

/// Which standard error of the calibrated historical effect enters the NI statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SeSource {
    Sandwich,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NiConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Current-trial effect (control vs experimental); estimated from
    /// current-trial outcomes when omitted.
    #[serde(default)]
    pub mu_tc: Option<f64>,
    #[serde(default)]
    pub se_tc: Option<f64>,
    #[serde(default = "default_se_source")]
    pub se_source: SeSource,
}

fn default_alpha() -> f64 {
    0.025
}
fn default_se_source() -> SeSource {
    SeSource::Sandwich
}

impl Default for NiConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            mu_tc: None,
            se_tc: None,
            se_source: default_se_source(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    pub weights: WeightConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub ni: NiConfig,
}

/// Flag overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// Bootstrap seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Skip the bootstrap
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long, value_enum)]
    pub metric: Option<MetricName>,
    /// Trim bounds for propensity weights, e.g. 0.05,20
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub trim: Option<Vec<f64>>,
    #[arg(long)]
    pub strata: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_tc: Option<f64>,
    #[arg(long)]
    pub se_tc: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub se_source: Option<SeSource>,
    /// Run resampling loops on one thread
    #[arg(long)]
    pub sequential: bool,
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AnalysisConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.analysis.family == Family::Gaussian && self.analysis.metric == MetricName::LogOddsRatio {
            return bad("metric log_odds_ratio requires family bernoulli".into());
        }
        match &self.weights {
            WeightConfig::Analytic { target_shares: Some(shares), .. } => {
                for k in shares.keys() {
                    if k.parse::<i64>().is_err() {
                        return bad(format!("target share key {k:?} is not an integer category code"));
                    }
                }
            }
            WeightConfig::Propensity { covariates, trim, .. } => {
                if covariates.is_empty() {
                    return bad("propensity weights need at least one covariate".into());
                }
                if let Some((lo, hi)) = trim {
                    if !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                        return bad(format!("trim bounds ({lo}, {hi}) need 0 < lower < upper"));
                    }
                }
            }
            WeightConfig::Stratified { covariates, strata, .. } => {
                if covariates.is_empty() {
                    return bad("stratified weights need at least one covariate".into());
                }
                if *strata == 0 {
                    return bad("strata must be at least 1".into());
                }
            }
            _ => {}
        }
        if self.bootstrap.enabled && self.bootstrap.replicates < ni_reweight::bootstrap::MIN_REPLICATES {
            return bad(format!(
                "bootstrap replicates must be at least {}",
                ni_reweight::bootstrap::MIN_REPLICATES
            ));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad("bootstrap level must lie in (0, 1)".into());
        }
        if !(self.ni.alpha > 0.0 && self.ni.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)".into());
        }
        if self.ni.mu_tc.is_some() != self.ni.se_tc.is_some() {
            return bad("mu_tc and se_tc must be given together".into());
        }
        if self.ni.se_tc.is_some_and(|s| !(s > 0.0)) {
            return bad("se_tc must be positive".into());
        }
        if self.ni.se_source == SeSource::Bootstrap && !self.bootstrap.enabled {
            return bad("se_source = bootstrap needs the bootstrap enabled".into());
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.bootstrap.seed = s;
        }
        if let Some(b) = o.replicates {
            self.bootstrap.replicates = b;
        }
        if o.no_bootstrap {
            self.bootstrap.enabled = false;
        }
        if let Some(m) = o.metric {
            self.analysis.metric = m;
        }
        if let Some(t) = &o.trim {
            match &mut self.weights {
                WeightConfig::Propensity { trim, .. } => *trim = Some((t[0], t[1])),
                _ => return Err(CliError::Validation("--trim applies to propensity weights only".into())),
            }
        }
        if let Some(l) = o.strata {
            match &mut self.weights {
                WeightConfig::Stratified { strata, .. } => *strata = l,
                _ => return Err(CliError::Validation("--strata applies to stratified weights only".into())),
            }
        }
        if o.mu_tc.is_some() || o.se_tc.is_some() {
            self.ni.mu_tc = o.mu_tc.or(self.ni.mu_tc);
            self.ni.se_tc = o.se_tc.or(self.ni.se_tc);
        }
        if let Some(a) = o.alpha {
            self.ni.alpha = a;
        }
        if let Some(s) = o.se_source {
            self.ni.se_source = s;
        }
        if o.sequential {
            self.analysis.execution = Execution::Sequential;
        }
        self.validate()
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn bootstrap_options(&self) -> BootstrapOptions {
        BootstrapOptions {
            replicates: self.bootstrap.replicates,
            seed: self.bootstrap.seed,
            level: self.bootstrap.level,
            execution: self.analysis.execution,
        }
    }

    /// Target shares keyed by integer code.
    pub fn target_shares(&self) -> Option<BTreeMap<i64, f64>> {
        match &self.weights {
            WeightConfig::Analytic { target_shares: Some(s), .. } => {
                Some(s.iter().map(|(k, v)| (k.parse().expect("validated"), *v)).collect())
            }
            _ => None,
        }
    }
}

/// Resolves `path` against the directory of the config file.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [input]
        data = "impact.csv"

        [weights]
        mode = "analytic"
        covariate = "bpd"
        target_shares = { "1" = 0.22, "0" = 0.78 }
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = AnalysisConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.analysis.metric, MetricName::LogOddsRatio);
        assert_eq!(cfg.bootstrap.replicates, 2000);
        assert_eq!(cfg.ni.alpha, 0.025);
        assert_eq!(cfg.target_shares().unwrap()[&1], 0.22);
    }

    #[test]
    fn one_weight_mode() {
        let text = MINIMAL.replace("mode = \"analytic\"", "mode = \"both\"");
        assert!(AnalysisConfig::from_toml(&text).is_err());
        let text = format!("{MINIMAL}\ncovariates = [\"x\"]\n");
        assert!(AnalysisConfig::from_toml(&text).is_err());
    }

    #[test]
    fn metric_family_compatibility() {
        let text = format!("{MINIMAL}\n[analysis]\nfamily = \"gaussian\"\n");
        assert!(AnalysisConfig::from_toml(&text).is_err());
    }

    #[test]
    fn overrides_apply_and_change_digest() {
        let mut cfg = AnalysisConfig::from_toml(MINIMAL).unwrap();
        let before = cfg.digest();
        cfg.apply(&Overrides { seed: Some(7), ..Default::default() }).unwrap();
        assert_eq!(cfg.bootstrap.seed, 7);
        assert_ne!(cfg.digest(), before);
        let err = cfg.apply(&Overrides { trim: Some(vec![0.1, 5.0]), ..Default::default() });
        assert!(err.is_err());
    }
}
