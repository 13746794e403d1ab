use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vh_bench::fixture;
use vh_core::{convolve_scaled, hl_maximal, luxemburg_norm, ExponentFunction, ExponentSpec, MaximalConfig};

fn convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("convolve_scaled");
    for level in [10, 12, 14] {
        let fx = fixture(level);
        let (f, k) = (&fx.corpus[0], &fx.corpus[1]);
        g.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, _| {
            b.iter(|| convolve_scaled(black_box(f), black_box(k), 2).unwrap())
        });
    }
    g.finish();
}

fn maximal(c: &mut Criterion) {
    let mut g = c.benchmark_group("hl_maximal");
    for level in [10, 12] {
        let fx = fixture(level);
        let f = &fx.corpus[0];
        let cfg = MaximalConfig::for_grid(f.grid());
        g.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, _| b.iter(|| hl_maximal(black_box(f), &cfg)));
    }
    g.finish();
}

fn luxemburg(c: &mut Criterion) {
    let fx = fixture(12);
    let f = &fx.corpus[0];
    let spec = ExponentSpec::Smoothstep { left: 0.8, right: 1.5, x0: -1.0, x1: 1.0 };
    let p = ExponentFunction::with_inferred_class(spec, *f.grid()).unwrap();
    let one = ExponentFunction::constant(1.0, *f.grid()).unwrap();
    c.bench_function("luxemburg/variable", |b| b.iter(|| luxemburg_norm(black_box(f), &p)));
    c.bench_function("luxemburg/constant", |b| b.iter(|| luxemburg_norm(black_box(f), &one)));
}

criterion_group!(benches, convolution, maximal, luxemburg);
criterion_main!(benches);
