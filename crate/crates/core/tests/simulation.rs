use ni_reweight::calibration::EffectMetric;
use ni_reweight::par::Execution;
use ni_reweight::sim::{self, ReplicationAnalysis, SimConfig};

#[test]
fn same_seed_same_pool() {
    let cfg = SimConfig { seed: 42, ..Default::default() };
    assert_eq!(sim::generate_pool(&cfg).unwrap(), sim::generate_pool(&cfg).unwrap());
    let other = SimConfig { seed: 43, ..Default::default() };
    assert_ne!(sim::generate_pool(&cfg).unwrap(), sim::generate_pool(&other).unwrap());
}

#[test]
fn replication_study_is_schedule_independent() {
    let cfg = SimConfig::default();
    let run = |execution| {
        sim::run_replication_study(&cfg, 40, &ReplicationAnalysis { execution, ..Default::default() }).unwrap()
    };
    assert_eq!(run(Execution::Parallel), run(Execution::Sequential));
}

#[test]
fn identical_populations_agree() {
    let cfg = SimConfig {
        current_bpd_prevalence: 762.0 / 1502.0,
        current_covariate_rates: [0.4, 0.6, 0.5],
        ..Default::default()
    };
    let r = 500;
    let s = sim::run_replication_study(&cfg, r, &ReplicationAnalysis::default()).unwrap();
    let diffs: Vec<f64> = s.replicates.iter().map(|o| o.calibrated - o.uncalibrated).collect();
    let mean = diffs.iter().sum::<f64>() / r as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / (r as f64).sqrt(), "mean diff {mean}, sd {sd}");
    assert!((s.calibrated.truth - s.uncalibrated.truth).abs() < 1e-12);
}

#[test]
fn uncalibrated_estimate_is_biased_toward_source() {
    let s = sim::run_replication_study(&SimConfig::default(), 200, &ReplicationAnalysis::default()).unwrap();
    let u = s.uncalibrated;
    assert!((u.mean - u.truth).abs() <= 3.0 * u.mc_error, "{} vs {}", u.mean, u.truth);
    assert!(s.calibrated.mean - u.mean > 0.2);
}

#[test]
fn arm_mean_coverage_near_nominal() {
    let s = sim::run_replication_study(&SimConfig::default(), 1000, &ReplicationAnalysis::default()).unwrap();
    for c in s.arm_mean_coverage {
        assert!((0.92..=0.98).contains(&c), "coverage {c}");
    }
}

#[test]
fn risk_difference_study() {
    let analysis = ReplicationAnalysis { metric: EffectMetric::risk_difference(), ..Default::default() };
    let s = sim::run_replication_study(&SimConfig::default(), 100, &analysis).unwrap();
    let c = s.calibrated;
    assert!((c.mean - c.truth).abs() <= 4.0 * c.mc_error);
}

#[test]
fn zero_replications_rejected() {
    assert!(sim::run_replication_study(&SimConfig::default(), 0, &ReplicationAnalysis::default()).is_err());
}
