use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qdbc::classifier::{loocv_report, sample_label_counts};
use qdbc::data::{Dataset, StatsScope};
use qdbc::encoding::Preprocessing;
use qdbc::oqw::{class_curves, Scenario, WalkEngine};
use qdbc::recycling::{scan_pairs, Neighborhood};
use qdbc::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn loocv(c: &mut Criterion) {
    let ds = Dataset::iris();
    let mut g = c.benchmark_group("loocv_report");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| loocv_report(black_box(&ds), Preprocessing::MinMax, StatsScope::PerFold, exec))
        });
    }
    g.finish();
}

fn walks(c: &mut Criterion) {
    let ds = Dataset::iris().preprocess(Preprocessing::MinMax).unwrap();
    let mut g = c.benchmark_group("class_curves");
    g.sample_size(10);
    for (engine, steps) in [(WalkEngine::Marginal, 200), (WalkEngine::Blocks, 20)] {
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(format!("{engine:?}"), name), &steps, |b, &s| {
                b.iter(|| class_curves(&ds, Scenario::clustered(), s, engine, exec))
            });
        }
    }
    g.finish();
}

fn recycling(c: &mut Criterion) {
    let ds = Dataset::iris();
    let mut g = c.benchmark_group("scan_pairs");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| scan_pairs(&ds, Preprocessing::MinMax, Neighborhood::Complete, exec))
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let ds = Dataset::iris().preprocess(Preprocessing::MinMax).unwrap();
    let train = ds.training_set().unwrap();
    let test = ds.features()[0].clone();
    let mut g = c.benchmark_group("sample_label_counts");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| sample_label_counts(&test, &train, 7, 20_000, 1000, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, loocv, walks, recycling, sampling);
criterion_main!(benches);
