mod common;

use num_rational::BigRational;
use proptest::prelude::*;

use subgrad_core::asd::{asd_program_flat, direction_for_seed, AsdOptions};
use subgrad_core::oracle::{
    exact_piece_gradient, extrapolate, hull_distance, hull_vertices, limiting_gradient, lipschitz_probe,
    min_norm_point, naive_ad, run_check, CheckEngine, CheckOptions, CheckStatus, FdSchedule, HullOptions,
    NaiveConvention, OracleError,
};
use subgrad_core::scalar::{rationals, to_floats};

#[test]
fn asd_engines_pass_every_oracle_on_the_corpus() {
    let opts = CheckOptions::default();
    for e in common::corpus().iter().filter(|e| e.name != "relu_chain100") {
        let d = e.input_arity();
        for (k, p) in e.points.iter().enumerate() {
            let v = p.v.clone().unwrap_or_else(|| direction_for_seed(d, k as u64));
            for engine in [CheckEngine::AsdFlat, CheckEngine::AsdNested] {
                let report = run_check(&e.parsed.program, &p.x, &v, &e.parsed.registry, engine, &opts).unwrap();
                let failed: Vec<_> = report.failures().collect();
                assert!(failed.is_empty(), "{} line {} {}: {:?}", e.name, p.line, engine.name(), failed);
            }
        }
    }
}

#[test]
fn naive_engine_is_caught_at_the_f2_kink() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "f2");
    let report =
        run_check(&e.parsed.program, &[0.0], &[1.0], &e.parsed.registry, CheckEngine::Naive, &CheckOptions::default())
            .unwrap();
    assert!(!report.passed());
    let hull = report.rows.iter().find(|r| r.oracle == "clarke-hull").unwrap();
    assert_eq!(hull.status, CheckStatus::Fail);
    assert_eq!(hull.measure, Some(1.0));
}

#[test]
fn naive_conventions() {
    let corpus = common::corpus();
    let f2 = common::entry(&corpus, "f2");
    let f4 = common::entry(&corpus, "f4");
    let relu = common::entry(&corpus, "relu");
    let lib = &f2.parsed.registry;
    let run = |e: &subgrad_core::corpus::CorpusEntry, conv: &NaiveConvention| naive_ad(&e.parsed.program, &[0.0], lib, conv);
    assert_eq!(run(f2, &NaiveConvention::default()).unwrap(), vec![0.0]);
    assert_eq!(run(f4, &NaiveConvention::default()).unwrap(), vec![0.0]);
    assert_eq!(run(relu, &NaiveConvention::with_relu_zero(0.5)).unwrap(), vec![0.5]);
    assert!(matches!(run(relu, &NaiveConvention::strict()), Err(OracleError::MissingConvention(_))));
    // away from kinks every convention is plain reverse mode
    assert_eq!(naive_ad(&f2.parsed.program, &[2.0], lib, &NaiveConvention::strict()).unwrap(), vec![1.0]);
}

#[test]
fn hull_of_abs_at_zero_is_the_unit_interval() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "abs");
    let h = hull_vertices(&e.parsed.program, &[0.0], &e.parsed.registry, &HullOptions::default()).unwrap();
    let mut vs = h.vertices.clone();
    vs.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(vs, vec![vec![-1.0], vec![1.0]]);
    assert!(h.verdict(&[0.25], 1e-6).is_member());
    assert!(!h.verdict(&[1.5], 1e-6).is_member());
}

#[test]
fn hull_requires_enough_directions_and_few_inputs() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "wide_relu");
    let err = hull_vertices(&e.parsed.program, &[0.0; 5], &e.parsed.registry, &HullOptions::default()).unwrap_err();
    assert!(matches!(err, OracleError::TooManyInputs { found: 5, limit: 4 }));
    let e = common::entry(&corpus, "max2");
    let few = HullOptions { n_dirs: 5, ..HullOptions::default() };
    assert!(matches!(
        hull_vertices(&e.parsed.program, &[0.0, 0.0], &e.parsed.registry, &few),
        Err(OracleError::TooFewDirections { found: 5, needed: 6 })
    ));
}

#[test]
fn limiting_gradient_of_maxnet_sees_the_flat_side() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "maxnet");
    let h = hull_vertices(&e.parsed.program, &vec![0.0; e.input_arity()], &e.parsed.registry, &HullOptions::default())
        .unwrap();
    assert!(h.vertices.len() >= 2, "{:?}", h.vertices);
}

#[test]
fn exact_oracle_agrees_with_float_asd_on_the_corpus() {
    for e in common::corpus().iter().filter(|e| e.name != "relu_chain100") {
        let d = e.input_arity();
        for (k, p) in e.points.iter().enumerate() {
            let v = p.v.clone().unwrap_or_else(|| direction_for_seed(d, k as u64));
            let xr: Vec<BigRational> = rationals(&p.x).unwrap();
            let vr: Vec<BigRational> = rationals(&v).unwrap();
            let exact = exact_piece_gradient(&e.parsed.program, &xr, &vr, &e.parsed.registry).unwrap();
            let r = asd_program_flat(&e.parsed.program, &p.x, &v, &e.parsed.registry, &AsdOptions::default()).unwrap();
            for (a, b) in to_floats(&exact).iter().zip(&r.gradient) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} line {}", e.name, p.line);
            }
            let rr = subgrad_core::asd::asd_program::<BigRational>(&e.parsed.program, &xr, &vr, &e.parsed.registry, &AsdOptions::default()).unwrap();
            assert_eq!(rr.gradient, exact, "{} line {}", e.name, p.line);
        }
    }
}

#[test]
fn limiting_gradient_on_a_smooth_program_is_the_gradient() {
    let corpus = common::corpus();
    let e = common::entry(&corpus, "poly_quad");
    let x = vec![0.5; e.input_arity()];
    let v = direction_for_seed(e.input_arity(), 3);
    let lg = limiting_gradient(&e.parsed.program, &x, &v, &e.parsed.registry, &FdSchedule::default()).unwrap();
    let r = asd_program_flat(&e.parsed.program, &x, &v, &e.parsed.registry, &AsdOptions::default()).unwrap();
    for (a, b) in lg.gradient.iter().zip(&r.gradient) {
        assert!((a - b).abs() <= 1e-6, "{a} {b}");
    }
}

#[test]
fn lipschitz_constants_of_builtins() {
    let lib = common::composition_registry();
    for (name, expect) in [("relu", 1.0), ("abs", 1.0), ("clip", 1.0)] {
        let r = lipschitz_probe(lib.get(name).unwrap(), &[(-3.0, 3.0)], 2000, 0, 100.0).unwrap();
        assert!(r.constant <= expect + 1e-9 && r.constant > 0.9 * expect, "{name}: {}", r.constant);
        assert!(!r.exceeded);
    }
    let hinge = lipschitz_probe(lib.get("hinge_sq").unwrap(), &[(-3.0, 3.0)], 2000, 0, 100.0).unwrap();
    assert!(hinge.constant <= 6.0 + 1e-9 && hinge.constant > 5.0, "{}", hinge.constant);
    let r = lipschitz_probe(lib.get("hinge_sq").unwrap(), &[(-3.0, 3.0)], 2000, 0, 2.0).unwrap();
    assert!(r.exceeded);
}

#[test]
fn richardson_recovers_a_polynomial_limit() {
    // q(h) = 2 + 3h + 5h²: the order-3 correction vanishes
    let h = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
    let q: Vec<f64> = h.iter().map(|t| 2.0 + 3.0 * t + 5.0 * t * t).collect();
    let (value, error) = extrapolate(&h, &q, &[0.0; 4], 3);
    assert!((value - 2.0).abs() < 1e-12, "{value}");
    assert!(error < 1e-10, "{error}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn min_norm_point_lies_in_the_hull_and_is_optimal(
        pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8)
    ) {
        let (p, w) = min_norm_point(&pts, 1e-12);
        prop_assert!(w.iter().all(|&c| c >= -1e-12));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let combo: Vec<f64> = (0..3).map(|j| pts.iter().zip(&w).map(|(q, c)| c * q[j]).sum()).collect();
        for (a, b) in combo.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // p·(q − p) >= 0 for every vertex q
        let pp: f64 = p.iter().map(|c| c * c).sum();
        for q in &pts {
            let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
            prop_assert!(pq - pp >= -1e-8 * (1.0 + pp), "{pq} {pp}");
        }
        prop_assert!(hull_distance(&pts, &p, 1e-9) < 1e-6);
    }
}
