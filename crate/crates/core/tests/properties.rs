//! Randomized properties of the core operators.

use proptest::prelude::*;
use vh_core::*;

fn grid() -> Grid {
    make_grid(8.0, 10).unwrap()
}

fn bump_sum(g: Grid, terms: &[(f64, f64, f64)]) -> SampledFunction {
    SampledFunction::from_fn(g, 8.0, |x| {
        terms.iter().map(|(c, w, a)| a * (-((x - c) / w).powi(2)).exp()).sum()
    })
    .unwrap()
}

fn terms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, 0.1..1.0f64, -2.0..2.0f64), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn luxemburg_is_homogeneous(t in terms(), c in -5.0..5.0f64, pv in 0.5..2.5f64) {
        let g = grid();
        let f = bump_sum(g, &t);
        let p = ExponentFunction::constant(pv, g).unwrap();
        let a = luxemburg_norm(&f.scaled(c), &p);
        let b = c.abs() * luxemburg_norm(&f, &p);
        prop_assert!((a - b).abs() <= 1e-10 * b.max(1e-300));
    }

    #[test]
    fn luxemburg_norm_is_the_modular_threshold(t in terms()) {
        let g = grid();
        let f = bump_sum(g, &t);
        let spec = ExponentSpec::Smoothstep { left: 1.2, right: 2.0, x0: -1.0, x1: 1.0 };
        let p = ExponentFunction::with_inferred_class(spec, g).unwrap();
        let n = luxemburg_norm(&f, &p);
        prop_assume!(n > 0.0);
        prop_assert!(modular(&f, &p, n).unwrap() <= 1.0);
        prop_assert!(modular(&f, &p, n * (1.0 - 1e-9)).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn convolution_is_linear(t1 in terms(), t2 in terms(), a in -2.0..2.0f64, j in -1i32..3) {
        let g = grid();
        let (f1, f2) = (bump_sum(g, &t1), bump_sum(g, &t2));
        let k = SampledFunction::from_fn(g, 1.0, |x| (1.0 - x * x).max(0.0)).unwrap();
        let lhs = convolve_scaled(&f1.combine(a, &f2, 1.0), &k, j).unwrap();
        let rhs = convolve_scaled(&f1, &k, j).unwrap().combine(a, &convolve_scaled(&f2, &k, j).unwrap(), 1.0);
        prop_assert!(lhs.sub(&rhs).sup_norm() <= 1e-10 * (1.0 + rhs.sup_norm()));
    }

    #[test]
    fn maximal_dominates_and_is_sublinear(t1 in terms(), t2 in terms()) {
        let g = grid();
        let (f1, f2) = (bump_sum(g, &t1), bump_sum(g, &t2));
        let cfg = MaximalConfig::for_grid(&g);
        let m1 = hl_maximal(&f1, &cfg);
        let m2 = hl_maximal(&f2, &cfg);
        let m12 = hl_maximal(&f1.add(&f2), &cfg);
        for i in 0..g.len() {
            prop_assert!(m1.values()[i] >= f1.values()[i].abs() - 1e-12);
            prop_assert!(m12.values()[i] <= m1.values()[i] + m2.values()[i] + 1e-12);
        }
    }
}

fn bank_and_lattice() -> (FilterBank, CubeLattice) {
    let g = make_grid(8.0, 11).unwrap();
    (build_filterbank(&g, 2, -3, 4, 3).unwrap(), build_lattice(&g, 2, -3, 4).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn calderon_reconstructs_band_limited_sums(seed in 0u64..1000) {
        let g = make_grid(8.0, 12).unwrap();
        let (bank, lat) = (build_filterbank(&g, 2, -3, 5, 3).unwrap(), build_lattice(&g, 2, -3, 5).unwrap());
        let spec = CorpusSpec { generators: vec![GeneratorKind::BandLimited], count: 1, seed, ..CorpusSpec::default() };
        let (_, f) = spec.generate(&bank).unwrap().remove(0);
        let rec = analyze(&f, &bank, &lat).unwrap().synthesize();
        prop_assert!(rec.relative_l2_error(&f) < 1e-3);
    }

    #[test]
    fn paraproduct_is_linear_in_the_symbol(c in -3.0..3.0f64, seed in 0u64..100) {
        let (bank, lat) = bank_and_lattice();
        let g = *bank.grid();
        let b1 = SampledFunction::from_fn(g, 8.0, |x| (1.0 + x * x).ln()).unwrap();
        let b2 = SampledFunction::from_fn(g, 8.0, |x| (2.0 * x).sin()).unwrap();
        let spec = CorpusSpec { count: 1, seed, ..CorpusSpec::default() };
        let (_, f) = spec.generate(&bank).unwrap().remove(0);
        let lhs = paraproduct_apply(&BmoSymbol::new(b1.combine(1.0, &b2, c)), &f, &bank, &lat).unwrap();
        let rhs = paraproduct_apply(&BmoSymbol::new(b1), &f, &bank, &lat).unwrap()
            .combine(1.0, &paraproduct_apply(&BmoSymbol::new(b2), &f, &bank, &lat).unwrap(), c);
        prop_assert!(lhs.sub(&rhs).sup_norm() <= 1e-10 * (1.0 + rhs.sup_norm()));
    }
}
