use criterion::{black_box, criterion_group, criterion_main, Criterion};
use vh_bench::fixture;
use vh_core::{analyze, atomic_decompose, BmoSymbol, ExponentFunction, Paraproduct};

fn calderon(c: &mut Criterion) {
    let fx = fixture(12);
    let f = &fx.corpus[0];
    c.bench_function("calderon/analyze", |b| b.iter(|| analyze(black_box(f), &fx.bank, &fx.lattice).unwrap()));
    let field = analyze(f, &fx.bank, &fx.lattice).unwrap();
    c.bench_function("calderon/synthesize", |b| b.iter(|| field.synthesize()));
}

fn paraproduct(c: &mut Criterion) {
    let fx = fixture(12);
    let pp = Paraproduct::new(BmoSymbol::new(fx.corpus[1].clone()), &fx.bank, &fx.lattice).unwrap();
    let f = &fx.corpus[0];
    c.bench_function("paraproduct/apply", |b| b.iter(|| pp.apply(black_box(f)).unwrap()));
    c.bench_function("paraproduct/adjoint", |b| b.iter(|| pp.adjoint(black_box(f)).unwrap()));
}

fn decompose(c: &mut Criterion) {
    let fx = fixture(11);
    let f = &fx.corpus[0];
    let p = ExponentFunction::constant(1.0, *f.grid()).unwrap();
    let mut g = c.benchmark_group("atomic");
    g.sample_size(10);
    g.bench_function("decompose", |b| {
        b.iter(|| atomic_decompose(black_box(f), &p, &fx.bank, &fx.lattice, 2.0, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, calderon, paraproduct, decompose);
criterion_main!(benches);
