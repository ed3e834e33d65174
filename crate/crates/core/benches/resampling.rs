use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ni_reweight::bootstrap::{self, BootstrapOptions, WeightRecipe};
use ni_reweight::calibration::{EffectMetric, Estimator, Method, Target};
use ni_reweight::glm::Family;
use ni_reweight::par::Execution;
use ni_reweight::propensity::PropensitySpec;
use ni_reweight::sim::{self, ReplicationAnalysis, SimConfig, COVARIATES};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn log_or_estimator() -> Estimator {
    Estimator {
        method: Method::Parametric,
        family: Family::Bernoulli,
        target: Target::Effect(EffectMetric::log_odds_ratio()),
    }
}

fn bootstrap_analytic(c: &mut Criterion) {
    let pool = sim::table_one_pool(false);
    let recipe = WeightRecipe::Analytic {
        covariate: "bpd".into(),
        target_shares: BTreeMap::from([(1, 0.22), (0, 0.78)]),
    };
    let mut group = c.benchmark_group("bootstrap_analytic_b500");
    for (name, execution) in MODES {
        let opts = BootstrapOptions { replicates: 500, execution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| bootstrap::bootstrap_ci(black_box(&pool), &recipe, &log_or_estimator(), opts).unwrap())
        });
    }
    group.finish();
}

fn bootstrap_propensity(c: &mut Criterion) {
    let pool = sim::generate_pool(&SimConfig::default()).unwrap();
    let recipe = WeightRecipe::Propensity { spec: PropensitySpec::main_effects(&COVARIATES), trim: None };
    let mut group = c.benchmark_group("bootstrap_propensity_b100");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = BootstrapOptions { replicates: 100, execution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| bootstrap::bootstrap_ci(black_box(&pool), &recipe, &log_or_estimator(), opts).unwrap())
        });
    }
    group.finish();
}

fn replication(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let mut group = c.benchmark_group("replication_r50");
    group.sample_size(10);
    for (name, execution) in MODES {
        let analysis = ReplicationAnalysis { execution, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &analysis, |b, analysis| {
            b.iter(|| sim::run_replication_study(black_box(&cfg), 50, analysis).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap_analytic, bootstrap_propensity, replication);
criterion_main!(benches);
