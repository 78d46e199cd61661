use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use harvester_core::dynamics::{steady_mean_power, steady_mean_power_batch, HarvesterParams, IntegratorSettings, Param};
use harvester_core::pce::{fit_least_squares, FitOptions};
use harvester_core::probability::{sample, RandomEntry, RandomInputSpec, UniformInterval};
use harvester_core::statistics::{kde, kde_grid, silverman_bandwidth};
use std::hint::black_box;

fn spec() -> RandomInputSpec {
    let base = HarvesterParams { f: 0.25, ..HarvesterParams::default() };
    let entries = [Param::Lambda, Param::Kappa, Param::F, Param::Omega]
        .into_iter()
        .map(|param| {
            let x = base.get(param);
            RandomEntry { param, interval: UniformInterval::new(0.8 * x, 1.2 * x).unwrap() }
        })
        .collect();
    RandomInputSpec::new(entries, &base).unwrap()
}

fn integration(c: &mut Criterion) {
    let s = IntegratorSettings { t_end: 200.0, ..IntegratorSettings::default() };
    let spec = spec();
    let points: Vec<HarvesterParams> = sample(&spec, 32, 1).iter().map(|r| spec.params_at(r).unwrap()).collect();
    let mut g = c.benchmark_group("mean_power");
    g.throughput(Throughput::Elements(points.len() as u64));
    g.bench_function("scalar", |b| {
        b.iter(|| points.iter().map(|p| steady_mean_power(black_box(p), &s).unwrap()).sum::<f64>())
    });
    g.bench_function("batch", |b| b.iter(|| steady_mean_power_batch(black_box(&points), &s)));
    g.finish();
}

fn pce_fit(c: &mut Criterion) {
    let spec = spec();
    let mut g = c.benchmark_group("pce_fit");
    for degree in [2, 3, 4] {
        let xs = sample(&spec, 1000, 2);
        let y: Vec<f64> = xs.iter().map(|r| r[0] * r[1] / r[3] + (r[2] * 20.0).sin()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(degree), &degree, |b, &d| {
            b.iter(|| fit_least_squares(&spec, black_box(&xs), &y, d, &FitOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn density(c: &mut Criterion) {
    let spec = spec();
    let values: Vec<f64> = sample(&spec, 100_000, 3).iter().map(|r| r[0] * r[3]).collect();
    let h = silverman_bandwidth(&values).unwrap();
    let grid = kde_grid(&values, h, 512);
    c.bench_function("kde_100k_x_512", |b| b.iter(|| kde(black_box(&values), &grid, Some(h)).unwrap()));
}

criterion_group!(benches, integration, pce_fit, density);
criterion_main!(benches);
