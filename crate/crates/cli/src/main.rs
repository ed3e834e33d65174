use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ni_reweight::glm::Family;
use ni_reweight::ni_test::{self, NiInputs, NiTestResult};
use ni_reweight_cli::config::{AnalysisConfig, MetricName, Overrides};
use ni_reweight_cli::error::{CliError, Result, StageExt};
use ni_reweight_cli::report::{self, SCHEMA_VERSION};
use ni_reweight_cli::{ingest, pipeline, simulate};
use serde::Serialize;

/// Calibrate a historical trial's treatment effect to a target population and
/// test noninferiority.
#[derive(Debug, Parser)]
#[command(name = "ni-reweight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a CSV file and print per-trial, per-arm tallies
    IngestCheck {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        current: Option<PathBuf>,
        /// Check outcomes against this family
        #[arg(long, value_parser = parse_family, default_value = "bernoulli")]
        family: Family,
    },
    /// Fit the weighting stage only and report weight diagnostics
    Propensity {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full pipeline and write the JSON report
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Noninferiority tests, from a config (full pipeline) or from summary statistics
    Test {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, allow_hyphen_values = true)]
        mu_cp: Option<f64>,
        #[arg(long)]
        se_cp: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw a simulated historical + current pool and write it as CSV
    Simulate {
        /// TOML simulation settings (defaults when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// CSV destination for the pool
        #[arg(long)]
        output: PathBuf,
        /// JSON destination for the summary (stdout when omitted)
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Replication study of the propensity-weighted estimator over simulated pools
    Replicate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        replications: usize,
        /// Propensity covariates (default: bpd,x1,x2,x3)
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', num_args = 2)]
        trim: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "log-odds-ratio")]
        metric: MetricName,
        #[arg(long)]
        sequential: bool,
        /// Leave the per-replicate estimates out of the JSON
        #[arg(long)]
        omit_replicates: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    match s {
        "bernoulli" => Ok(Family::Bernoulli),
        "gaussian" => Ok(Family::Gaussian),
        _ => Err(format!("unknown family {s:?} (bernoulli | gaussian)")),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<(AnalysisConfig, PathBuf)> {
    let mut cfg = AnalysisConfig::load(path)?;
    cfg.apply(overrides)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

#[derive(Serialize)]
struct StandaloneTests {
    schema_version: &'static str,
    inputs: NiInputs,
    synthesis: NiTestResult,
    fixed_margin: NiTestResult,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::IngestCheck { input, current, family } => {
            let mut ing = ingest::ingest_path(&input)?;
            if let Some(c) = current {
                ing = ing.merge(ingest::ingest_path(&c)?)?;
            }
            ing.check_family(family)?;
            emit(&report::to_json(&ingest::summarize(&ing.data)), None)
        }
        Command::Propensity { config, overrides, output } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let r = pipeline::run_weights(&cfg, &base)?;
            emit(&report::to_json(&r), output.as_deref())
        }
        Command::Calibrate { config, overrides, output } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let r = pipeline::run_pipeline(&cfg, &base)?;
            emit(&report::to_json(&r), output.as_deref())
        }
        Command::Test { config: Some(config), overrides, output, .. } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let r = pipeline::run_pipeline(&cfg, &base)?;
            if r.ni_tests.is_none() {
                return Err(CliError::Validation(
                    "no current-trial effect: set ni.mu_tc/ni.se_tc or supply current-trial rows".into(),
                ));
            }
            emit(&report::to_json(&r), output.as_deref())
        }
        Command::Test { config: None, overrides, mu_cp, se_cp, output } => {
            let (Some(mu_tc), Some(se_tc), Some(mu_cp), Some(se_cp)) = (overrides.mu_tc, overrides.se_tc, mu_cp, se_cp) else {
                return Err(CliError::Validation(
                    "without --config, --mu-tc, --se-tc, --mu-cp and --se-cp are required".into(),
                ));
            };
            let alpha = overrides.alpha.unwrap_or(0.025);
            let inputs = NiInputs::new(mu_tc, se_tc, mu_cp, se_cp, alpha).stage("ni test")?;
            let r = StandaloneTests {
                schema_version: SCHEMA_VERSION,
                inputs,
                synthesis: ni_test::synthesis_test(&inputs).stage("ni test")?,
                fixed_margin: ni_test::fixed_margin_test(&inputs).stage("ni test")?,
            };
            emit(&report::to_json(&r), output.as_deref())
        }
        Command::Simulate { config, seed, stream, output, summary } => {
            let mut cfg = simulate::load_sim_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (pool, r) = simulate::simulate(&cfg, stream)?;
            let file = std::fs::File::create(&output).map_err(|e| CliError::io(&output, e))?;
            ingest::write_csv(&pool, file).map_err(|e| CliError::Validation(format!("{}: {e}", output.display())))?;
            emit(&report::to_json(&r), summary.as_deref())
        }
        Command::Replicate { config, seed, replications, covariates, trim, metric, sequential, omit_replicates, output } => {
            let mut cfg = simulate::load_sim_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut analysis = simulate::analysis_from_flags(covariates, trim, metric.effect_metric());
            if sequential {
                analysis.execution = ni_reweight::par::Execution::Sequential;
            }
            let mut r = simulate::replicate(&cfg, replications, &analysis)?;
            if omit_replicates {
                r.summary.replicates.clear();
            }
            emit(&report::to_json(&r), output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
