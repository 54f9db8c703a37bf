use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctrl_ransac::experiments::{gen_synthetic, SyntheticSpec};
use ctrl_ransac::inference::Method;
use ctrl_ransac::par;
use ctrl_ransac::pipeline::{Analysis, TestOptions};
use ctrl_ransac::ransac::RansacConfig;
use ctrl_ransac::truncation::{count_tail, ctrl_ransac_region, dp_count_regions, OptimalityRule};

fn analysis(n: usize) -> Analysis {
    let spec = SyntheticSpec { delta: 3.0, seed: 11, ..SyntheticSpec::new(n, 5) };
    let (data, _) = gen_synthetic(&spec).unwrap();
    Analysis::run(&data, &RansacConfig::new(15, 2.0, 5)).unwrap()
}

/// Every anomaly of one dataset: rayon pool versus one worker.
fn test_all(c: &mut Criterion) {
    let mut group = c.benchmark_group("test_all");
    group.sample_size(10);
    let opts = TestOptions::default();
    for n in [100, 200] {
        let a = analysis(n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &a, |bch, a| {
            bch.iter(|| a.test_all(black_box(&[Method::Ctrl]), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &a, |bch, a| {
            bch.iter(|| par::single_worker(|| a.test_all(black_box(&[Method::Ctrl]), &opts).unwrap()))
        });
    }
    group.finish();
}

/// One region from a prepared table.
fn region(c: &mut Criterion) {
    let a = analysis(200);
    let ctx = a.context(a.anomalies()[0]).unwrap();
    let table = a.table(&ctx).unwrap();
    let anomalies = a.anomalies().to_vec();
    let mut group = c.benchmark_group("ctrl_region");
    group.bench_function("parallel", |bch| {
        bch.iter(|| ctrl_ransac_region(black_box(&table), &anomalies, OptimalityRule::FirstEncountered).unwrap())
    });
    group.bench_function("sequential", |bch| {
        bch.iter(|| {
            par::single_worker(|| {
                ctrl_ransac_region(black_box(&table), &anomalies, OptimalityRule::FirstEncountered).unwrap()
            })
        })
    });
    group.finish();
}

/// Count tails of one model row: bitset lattice versus the full interval-set table.
fn count_dp(c: &mut Criterion) {
    let a = analysis(200);
    let ctx = a.context(a.anomalies()[0]).unwrap();
    let table = a.table(&ctx).unwrap();
    let k = a.anomalies().len();
    let row = table.row(0);
    let mut group = c.benchmark_group("count_dp");
    group.bench_function("lattice", |bch| bch.iter(|| count_tail(black_box(row), k)));
    group.bench_function("table", |bch| bch.iter(|| dp_count_regions(black_box(row), k)));
    group.finish();
}

criterion_group!(benches, test_all, region, count_dp);
criterion_main!(benches);
