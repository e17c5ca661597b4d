mod common;

use num_rational::BigRational;
use proptest::prelude::*;

use subgrad_core::asd::{
    asd_program, asd_program_flat, cross_check, direction_for_seed, reverse_gradient, seeded_rng,
    subgradient, AsdOptions,
};
use subgrad_core::dsl::parse_program;
use subgrad_core::library::builtin_registry;
use subgrad_core::oracle::{fd_directional, FdSchedule};
use subgrad_core::scalar::rationals;

fn opts() -> AsdOptions {
    AsdOptions::default()
}

#[test]
fn variants_agree_exactly_in_rational_replay() {
    let lib = builtin_registry();
    let mut rng = seeded_rng(1);
    for case in 0..1000 {
        let d = 1 + case % 3;
        let prog = common::random_program(&mut rng, d, 3 + case % 6);
        let x = if case % 3 == 0 { vec![0.0; d] } else { common::dyadic_point(&mut rng, d) };
        let v = common::dyadic_point(&mut rng, d);
        let xr = rationals(&x).unwrap();
        let vr = rationals(&v).unwrap();
        let nested = asd_program::<BigRational>(&prog, &xr, &vr, &lib, &opts()).unwrap();
        let flat = asd_program_flat::<BigRational>(&prog, &xr, &vr, &lib, &opts()).unwrap();
        assert_eq!(nested.value, flat.value, "case {case}: {prog}");
        assert_eq!(nested.derivative, flat.derivative, "case {case}: {prog}");
        assert_eq!(nested.gradient, flat.gradient, "case {case}: {prog}");
        assert_eq!(nested.traces, flat.traces, "case {case}: {prog}");
    }
}

#[test]
fn variants_agree_bitwise_on_dyadic_data() {
    // Small dyadic constants and inputs keep every intermediate exactly
    // representable, so both accumulation orders give identical floats.
    let lib = builtin_registry();
    let mut rng = seeded_rng(2);
    for case in 0..1000 {
        let d = 1 + case % 3;
        let prog = common::random_program(&mut rng, d, 3 + case % 5);
        let x = if case % 3 == 0 { vec![0.0; d] } else { common::dyadic_point(&mut rng, d) };
        let v = common::dyadic_point(&mut rng, d);
        let nested = asd_program(&prog, &x, &v, &lib, &opts()).unwrap();
        let flat = asd_program_flat(&prog, &x, &v, &lib, &opts()).unwrap();
        assert_eq!(
            (nested.value, nested.derivative, &nested.gradient, &nested.traces),
            (flat.value, flat.derivative, &flat.gradient, &flat.traces),
            "case {case}: {prog}"
        );
    }
}

#[test]
fn smooth_points_match_plain_reverse_mode() {
    let lib = builtin_registry();
    let mut rng = seeded_rng(3);
    let mut checked = 0;
    for case in 0..500 {
        let d = 1 + case % 3;
        let prog = common::random_program(&mut rng, d, 6);
        let x: Vec<f64> = (0..d).map(|i| 0.3 + 0.17 * i as f64 - 0.05 * (case % 7) as f64).collect();
        let v = direction_for_seed(d, case as u64);
        let r = asd_program_flat(&prog, &x, &v, &lib, &opts()).unwrap();
        if r.ties > 0 {
            continue;
        }
        checked += 1;
        let plain = reverse_gradient(&prog, &x, &lib).unwrap();
        assert_eq!(r.gradient, plain.gradient, "case {case}: {prog}");
        assert_eq!(r.value, plain.value);
    }
    assert!(checked > 300, "{checked}");
}

#[test]
fn reruns_are_identical() {
    let lib = builtin_registry();
    let mut rng = seeded_rng(4);
    for case in 0..200 {
        let prog = common::random_program(&mut rng, 2, 8);
        let x = common::dyadic_point(&mut rng, 2);
        let a = subgradient(&prog, &x, case, &lib, &opts()).unwrap();
        let b = subgradient(&prog, &x, case, &lib, &opts()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cost.runtime_asd, b.cost.runtime_asd);
    }
}

#[test]
fn documented_subgradients() {
    let lib = builtin_registry();
    let corpus = common::corpus();
    let f1 = &common::entry(&corpus, "f1").parsed.program;
    let f2 = &common::entry(&corpus, "f2").parsed.program;
    let abs = &common::entry(&corpus, "abs").parsed.program;
    let mut abs_seen = [false; 2];
    for seed in 0..100 {
        let s = subgradient(f1, &[0.0], seed, &lib, &opts()).unwrap();
        assert_eq!((s.value, s.gradient), (0.0, vec![1.0]));
        assert_eq!(subgradient(f2, &[0.0], seed, &lib, &opts()).unwrap().gradient, vec![1.0]);
        let u = subgradient(abs, &[0.0], seed, &lib, &opts()).unwrap().gradient[0];
        assert!(u == 1.0 || u == -1.0);
        abs_seen[(u > 0.0) as usize] = true;
    }
    assert_eq!(abs_seen, [true, true]);
}

#[test]
fn documented_program_results() {
    let lib = builtin_registry();
    let corpus = common::corpus();
    let run = |name: &str, x: f64, v: f64| {
        let r = asd_program(&common::entry(&corpus, name).parsed.program, &[x], &[v], &lib, &opts()).unwrap();
        (r.value, r.derivative, r.gradient)
    };
    assert_eq!(run("f2", 0.0, 1.0), (0.0, 1.0, vec![1.0]));
    assert_eq!(run("f3", 0.0, 1.0), (0.0, 1.0, vec![1.0]));
    assert_eq!(run("f4", 0.0, 1.0), (0.0, 1.0, vec![1.0]));
    assert_eq!(run("relu_sq", 0.0, 1.0), (0.0, 0.0, vec![0.0]));
    assert_eq!(run("abs", 0.0, -1.0), (0.0, 1.0, vec![-1.0]));
}

#[test]
fn relu_chain_cost_stays_within_bounds() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "relu_chain100");
    for (x, v) in [(1.0, 1.0), (0.0, 1.0), (0.0, -1.0), (-1.0, 1.0)] {
        let flat = asd_program_flat(&e.parsed.program, &[x], &[v], &e.parsed.registry, &opts()).unwrap();
        let nested = asd_program(&e.parsed.program, &[x], &[v], &e.parsed.registry, &opts()).unwrap();
        assert!(flat.cost.ratio <= 6.0, "{:?}", flat.cost);
        assert!(nested.cost.ratio <= 10.0, "{:?}", nested.cost);
    }
}

/// A lone product of `n` distinct inputs meters at `(7n − 3)/n`: value `n`,
/// partials `2n − 3`, tangent `2n`, reverse `2n`. From `n = 4` on this
/// exceeds 6, so the flat bound is a property of programs whose wide
/// monomials are diluted by other work, not of every program.
#[test]
fn wide_monomial_ratio_is_seven_minus_three_over_n() {
    let lib = builtin_registry();
    for n in 1..=9usize {
        let factors: Vec<String> = (1..=n).map(|i| format!("n{i}")).collect();
        let src = format!("inputs {n}\nn{k} = mono 1 {}\noutput n{k}\n", factors.join(" "), k = n + 1);
        let prog = parse_program(&src, &lib).unwrap().program;
        let r = asd_program_flat(&prog, &vec![1.5; n], &vec![1.0; n], &lib, &opts()).unwrap();
        if n >= 2 {
            assert_eq!(r.cost.runtime_f, n as u64);
            assert_eq!(r.cost.runtime_asd, 7 * n as u64 - 3, "n = {n}");
        }
        assert_eq!(r.cost.ratio > 6.0, n >= 4, "n = {n}: {}", r.cost.ratio);
        assert!(reverse_gradient(&prog, &vec![1.5; n], &lib).unwrap().cost.ratio <= 5.0);
    }
}

#[test]
fn cross_check_reports_direction_dependence() {
    let lib = builtin_registry();
    let corpus = common::corpus();
    let abs = &common::entry(&corpus, "abs").parsed.program;
    let f2 = &common::entry(&corpus, "f2").parsed.program;
    let seeds: Vec<u64> = (0..8).collect();
    assert!(!cross_check(abs, &[0.0], &seeds, &lib, &opts()).unwrap().agrees(0.0));
    assert!(cross_check(f2, &[0.0], &seeds, &lib, &opts()).unwrap().agrees(0.0));
}

#[test]
fn kink_tolerance_widens_ties() {
    let lib = builtin_registry();
    let corpus = common::corpus();
    let relu = &common::entry(&corpus, "relu").parsed.program;
    let exact = asd_program_flat(relu, &[1e-12], &[-1.0], &lib, &opts()).unwrap();
    assert_eq!(exact.gradient, vec![1.0]);
    let loose = asd_program_flat(relu, &[1e-12], &[-1.0], &lib, &AsdOptions { kink_tol: 1e-9 }).unwrap();
    assert_eq!(loose.gradient, vec![0.0]);
    assert_eq!(loose.ties, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn directional_derivative_matches_finite_differences(seed in 0u64..1_000_000, d in 1usize..4) {
        let lib = builtin_registry();
        let mut rng = seeded_rng(seed);
        let prog = common::random_program(&mut rng, d, 6);
        let x = if seed % 2 == 0 { vec![0.0; d] } else { common::dyadic_point(&mut rng, d) };
        let v = direction_for_seed(d, seed);
        let r = asd_program_flat(&prog, &x, &v, &lib, &opts()).unwrap();
        let mut est = fd_directional(&prog, &x, &v, &lib, &FdSchedule::default()).unwrap();
        if !est.converged {
            est = fd_directional(&prog, &x, &v, &lib, &FdSchedule::exact()).unwrap();
        }
        prop_assume!(est.converged);
        let tol = 1e-6f64.max(1e-6 * r.derivative.abs());
        prop_assert!((est.value - r.derivative).abs() <= tol, "{prog}\nd={} fd={:?}", r.derivative, est);
    }

    #[test]
    fn cost_ratios_within_bounds(seed in 0u64..1_000_000, d in 1usize..4, nodes in 1usize..12) {
        // generated monomials have at most two factors
        let lib = builtin_registry();
        let mut rng = seeded_rng(seed);
        let prog = common::random_program(&mut rng, d, nodes);
        let x = common::dyadic_point(&mut rng, d);
        let v = direction_for_seed(d, seed);
        let flat = asd_program_flat(&prog, &x, &v, &lib, &opts()).unwrap();
        let nested = asd_program(&prog, &x, &v, &lib, &opts()).unwrap();
        prop_assert!(flat.cost.ratio >= 1.0 && flat.cost.ratio <= 6.0, "{prog}\n{:?}", flat.cost);
        prop_assert!(nested.cost.ratio <= 10.0, "{prog}\n{:?}", nested.cost);
        prop_assert_eq!(flat.cost.runtime_f, nested.cost.runtime_f);
    }
}
