//! Sequential versus parallel timings for the hot paths. Build with
//! `--no-default-features` to time the sequential fallback everywhere.

use std::hint::black_box;

use cheapseg::config::RunConfig;
use cheapseg::dataset::{generate_synthetic, presets, Split};
use cheapseg::par;
use cheapseg::pipeline::{evaluate_samples, train_bundle, SegmentOptions};
use cheapseg::stf::train_stf;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn config() -> RunConfig {
    let mut c = RunConfig::default();
    c.stf.patch_size = 9;
    c.stf.candidates = 100;
    c
}

fn benches(c: &mut Criterion) {
    let mut spec = presets::easy();
    spec.train = 24;
    spec.test = 8;
    let data = generate_synthetic(&spec, 1).unwrap();
    let cfg = config();
    let bundle = train_bundle(&data, &cfg).unwrap();
    let train = data.split(Split::Train);
    let test = data.split(Split::Test);
    let modes = [
        ("sequential", 1),
        ("parallel", par::current_threads().max(2)),
    ];
    let opts = SegmentOptions::full(&bundle);

    let mut g = c.benchmark_group("stf_train");
    g.sample_size(10);
    for (name, threads) in modes {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || black_box(train_stf(&train, 6, &cfg.stf, 7).unwrap()))
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("classify_image");
    let img = &test[0].image;
    for (name, threads) in modes {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || black_box(bundle.dstf.classify_image(img))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("segment_split");
    g.sample_size(10);
    for (name, threads) in modes {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || {
                    black_box(evaluate_samples(&bundle, &test, &opts, None).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
