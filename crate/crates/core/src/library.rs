//! Branching library functions, the builtin registry, the piecewise-polynomial
//! constructor and the constraint-qualification diagnostic.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{
    extract_pieces, limiting_sign, BranchProgram, BranchTrace, ExtractionError, ExtractionLimits,
    Instruction, Polynomial, Sign, Step,
};

/// A named nonsmooth primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryFunction {
    pub name: String,
    pub arity: usize,
    pub program: BranchProgram,
    /// Whether the registrant asserts that the branch constraints satisfy
    /// constraint qualification.
    pub claims_qualified: bool,
}

impl LibraryFunction {
    pub fn new(name: &str, program: BranchProgram, claims_qualified: bool) -> Self {
        LibraryFunction {
            name: name.to_string(),
            arity: program.input_arity(),
            program,
            claims_qualified,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("library function {0:?} is already registered")]
    Duplicate(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LibraryRegistry {
    functions: BTreeMap<String, LibraryFunction>,
}

impl LibraryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, g: LibraryFunction) -> Result<(), RegistryError> {
        if self.functions.contains_key(&g.name) {
            return Err(RegistryError::Duplicate(g.name));
        }
        self.functions.insert(g.name.clone(), g);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&LibraryFunction> {
        self.functions.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LibraryFunction> {
        self.functions.values()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

fn affine(constant: f64, terms: &[(f64, usize)]) -> Instruction {
    Instruction::affine(constant, terms)
}

fn builtin(name: &str, arity: usize, body: Step, qualified: bool) -> LibraryFunction {
    let program = BranchProgram::new(arity, body).expect("builtin program is well formed");
    LibraryFunction::new(name, program, qualified)
}

/// `relu`, `relu_bad`, `abs`, `max2`, `min2`, and the ladders `clip`
/// (−1, x, 1 with breakpoints ±1), `hinge_sq` (0, x²) and `ramp_sq` (x, x² split at 1).
pub fn builtin_registry() -> LibraryRegistry {
    let mut lib = LibraryRegistry::new();
    let x = Polynomial::var(1, 0);
    let one = Polynomial::constant_f64(1, 1.0);
    let fns = [
        // if x >= 0 return x else return 0
        builtin(
            "relu",
            1,
            Step::branch(0, Step::ret(0), Step::compute(affine(0.0, &[]), Step::ret(1))),
            true,
        ),
        // same function, tested through x^3
        builtin(
            "relu_bad",
            1,
            Step::compute(
                Instruction::monomial(1.0, &[(0, 3)]),
                Step::branch(1, Step::ret(0), Step::compute(affine(0.0, &[]), Step::ret(2))),
            ),
            false,
        ),
        builtin(
            "abs",
            1,
            Step::branch(0, Step::ret(0), Step::compute(affine(0.0, &[(-1.0, 0)]), Step::ret(1))),
            true,
        ),
        builtin(
            "max2",
            2,
            Step::compute(
                affine(0.0, &[(1.0, 0), (-1.0, 1)]),
                Step::branch(2, Step::ret(0), Step::ret(1)),
            ),
            true,
        ),
        builtin(
            "min2",
            2,
            Step::compute(
                affine(0.0, &[(1.0, 0), (-1.0, 1)]),
                Step::branch(2, Step::ret(1), Step::ret(0)),
            ),
            true,
        ),
        make_piecewise_poly("clip", &[-1.0, 1.0], &[-&one, x.clone(), one.clone()])
            .expect("clip ladder"),
        make_piecewise_poly("hinge_sq", &[0.0], &[Polynomial::zero(1), x.pow(2)])
            .expect("hinge_sq ladder"),
        make_piecewise_poly("ramp_sq", &[1.0], &[x.clone(), x.pow(2)]).expect("ramp_sq ladder"),
    ];
    for g in fns {
        lib.register(g).expect("builtin names are distinct");
    }
    lib
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PiecewiseError {
    #[error("need at least one piece")]
    NoPieces,
    #[error("{pieces} pieces need {} breakpoints, got {breakpoints}", pieces - 1)]
    CountMismatch { pieces: usize, breakpoints: usize },
    #[error("breakpoints must be finite and strictly increasing (index {0})")]
    NonMonotone(usize),
    #[error("piece {0} is not a univariate polynomial")]
    NotUnivariate(usize),
    #[error("piece {0} has a coefficient that is not exactly representable as a float")]
    NonRepresentable(usize),
    #[error("pieces {} and {} disagree at breakpoint {breakpoint}", index + 1, index + 2)]
    Discontinuous { index: usize, breakpoint: f64 },
}

/// Float coefficients in ascending degree, exact or `None`.
fn float_coefficients(p: &Polynomial) -> Option<Vec<f64>> {
    let mut out = vec![0.0; p.degree() as usize + 1];
    for (e, c) in p.terms() {
        let f = c.to_f64()?;
        if BigRational::from_float(f).as_ref() != Some(c) {
            return None;
        }
        out[e[0] as usize] = f;
    }
    Some(out)
}

/// Straight-line code for `Σ c_k x^k` over input node 0, starting at node
/// `next`: one monomial node `c_k x^k` per nonzero term of degree ≥ 2, then a
/// closing affine `c_0 + c_1 x + Σ m_k`. The identity piece returns node 0.
fn lower_piece(coeffs: &[f64], next: usize) -> Step {
    if coeffs.len() == 2 && coeffs[0] == 0.0 && coeffs[1] == 1.0 {
        return Step::ret(0);
    }
    let mut monos = Vec::new();
    for (k, &c) in coeffs.iter().enumerate().skip(2) {
        if c != 0.0 {
            monos.push(Instruction::monomial(c, &[(0, k as u32)]));
        }
    }
    let mut terms = Vec::new();
    if coeffs.len() > 1 && coeffs[1] != 0.0 {
        terms.push((coeffs[1], 0));
    }
    for i in 0..monos.len() {
        terms.push((1.0, next + i));
    }
    let out = next + monos.len();
    let mut step = Step::compute(affine(coeffs[0], &terms), Step::ret(out));
    for m in monos.into_iter().rev() {
        step = Step::compute(m, step);
    }
    step
}

/// Evaluates a ladder piece in the same operation order as its lowered code.
pub fn piece_value_f64(coeffs: &[f64], x: f64) -> f64 {
    if coeffs.len() == 2 && coeffs[0] == 0.0 && coeffs[1] == 1.0 {
        return x;
    }
    let mut acc: Option<f64> = (coeffs[0] != 0.0).then_some(coeffs[0]);
    let mut push = |t: f64| acc = Some(acc.map_or(t, |a| a + t));
    if coeffs.len() > 1 && coeffs[1] != 0.0 {
        push(coeffs[1] * x);
    }
    for (k, &c) in coeffs.iter().enumerate().skip(2) {
        if c != 0.0 {
            let mut pw = x;
            for _ in 1..k {
                pw *= x;
            }
            push(1.0 * (c * pw));
        }
    }
    acc.unwrap_or(0.0)
}

/// Univariate ladder: `x ≤ b_1 → p_1`, …, `x ≤ b_{k−1} → p_{k−1}`, else `p_k`,
/// with each test computed as `b_i − x ≥ 0`.
pub fn make_piecewise_poly(
    name: &str,
    breakpoints: &[f64],
    pieces: &[Polynomial],
) -> Result<LibraryFunction, PiecewiseError> {
    if pieces.is_empty() {
        return Err(PiecewiseError::NoPieces);
    }
    if breakpoints.len() + 1 != pieces.len() {
        return Err(PiecewiseError::CountMismatch {
            pieces: pieces.len(),
            breakpoints: breakpoints.len(),
        });
    }
    for (i, b) in breakpoints.iter().enumerate() {
        if !b.is_finite() || (i > 0 && breakpoints[i - 1] >= *b) {
            return Err(PiecewiseError::NonMonotone(i));
        }
    }
    let mut coeffs = Vec::with_capacity(pieces.len());
    for (i, p) in pieces.iter().enumerate() {
        if p.nvars() != 1 {
            return Err(PiecewiseError::NotUnivariate(i));
        }
        coeffs.push(float_coefficients(p).ok_or(PiecewiseError::NonRepresentable(i))?);
    }
    for (i, &b) in breakpoints.iter().enumerate() {
        let at = [BigRational::from_float(b).expect("finite breakpoint")];
        if pieces[i].eval(&at) != pieces[i + 1].eval(&at) {
            return Err(PiecewiseError::Discontinuous { index: i, breakpoint: b });
        }
    }
    // Level i on the else-spine has inputs plus i earlier test nodes defined.
    let k = pieces.len();
    let mut step = lower_piece(&coeffs[k - 1], k);
    for i in (0..k - 1).rev() {
        let test = 1 + i;
        step = Step::compute(
            affine(breakpoints[i], &[(-1.0, 0)]),
            Step::branch(test, lower_piece(&coeffs[i], test + 1), step),
        );
    }
    let program = BranchProgram::new(1, step).expect("ladder is well formed");
    Ok(LibraryFunction::new(name, program, true))
}

/// A constraint on which the two sides of the qualification identity differ.
#[derive(Clone, Debug, PartialEq)]
pub struct CqWitness {
    pub word: BranchTrace,
    pub constraint: Polynomial,
    pub x: Vec<BigRational>,
    pub v: Vec<BigRational>,
    /// `lim sign(h(x + δv))`.
    pub limiting: Sign,
    /// `lim sign(h(x) + δ ∇h(x)·v)`.
    pub first_order: Sign,
}

impl fmt::Display for CqWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[BigRational]| xs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        write!(
            f,
            "constraint {} on branch {} at x=({}) v=({}): limiting sign {}, first-order sign {}",
            self.constraint,
            self.word,
            join(&self.x),
            join(&self.v),
            self.limiting,
            self.first_order
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CqOutcome {
    Pass,
    Fail(Box<CqWitness>),
    /// Pieces could not be extracted.
    Inconclusive(ExtractionError),
}

impl CqOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, CqOutcome::Pass)
    }
}

/// `sign(h(x))` if nonzero, else `sign(∇h(x)·v)` if nonzero, else `+1`.
pub fn first_order_sign(h: &Polynomial, x: &[BigRational], v: &[BigRational]) -> Sign {
    let value = h.eval(x);
    if !value.is_zero() {
        return Sign::of(&value);
    }
    let slope: BigRational = h.gradient_at(x).iter().zip(v).map(|(g, d)| g * d).sum();
    Sign::of(&slope)
}

/// Qualification test over an already extracted piece set, such as the
/// composed pieces of a whole program.
pub fn cq_diagnostic_pieces(
    pieces: &[crate::graph::PieceDescription],
    x: &[BigRational],
    v: &[BigRational],
) -> CqOutcome {
    for p in pieces {
        for (h, _) in &p.constraints {
            let limiting = limiting_sign(h, x, v);
            let first_order = first_order_sign(h, x, v);
            if limiting != first_order {
                return CqOutcome::Fail(Box::new(CqWitness {
                    word: p.word.clone(),
                    constraint: h.clone(),
                    x: x.to_vec(),
                    v: v.to_vec(),
                    limiting,
                    first_order,
                }));
            }
        }
    }
    CqOutcome::Pass
}

/// Exact qualification test at one `(x, v)`: for every constraint of every
/// piece, the limiting sign along `v` must equal the first-order prediction.
pub fn cq_diagnostic(g: &LibraryFunction, x: &[BigRational], v: &[BigRational]) -> CqOutcome {
    assert_eq!(x.len(), g.arity, "point dimension");
    assert_eq!(v.len(), g.arity, "direction dimension");
    match extract_pieces(&g.program, &ExtractionLimits::default()) {
        Ok(pieces) => cq_diagnostic_pieces(&pieces, x, v),
        Err(e) => CqOutcome::Inconclusive(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CqSampleReport {
    pub checked: usize,
    /// How many of the checked points lie on some constraint's zero set.
    pub on_constraint: usize,
    pub outcome: CqOutcome,
}

fn dyadic(rng: &mut ChaCha8Rng, range: i64, denom: i64) -> BigRational {
    BigRational::new(rng.random_range(-range..=range).into(), denom.into())
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<BigRational> {
    loop {
        let v: Vec<BigRational> = (0..n).map(|_| dyadic(rng, 16, 8)).collect();
        if v.iter().any(|c| !c.is_zero()) {
            return v;
        }
    }
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let n = n.abs();
    let Some(m) = n.to_u64().filter(|&m| m <= 1_000_000) else {
        return vec![BigInt::one()];
    };
    (1..=m).filter(|d| m % d == 0).map(BigInt::from).collect()
}

/// Rational roots of a univariate polynomial, by the rational root theorem.
pub fn rational_roots(h: &Polynomial) -> Vec<BigRational> {
    assert_eq!(h.nvars(), 1);
    if h.is_zero() {
        return vec![BigRational::zero()];
    }
    let mut roots = Vec::new();
    let low = h.terms().map(|(e, _)| e[0]).min().unwrap_or(0);
    if low > 0 {
        roots.push(BigRational::zero());
    }
    let lcm = h.terms().fold(BigInt::one(), |acc, (_, c)| acc.lcm(c.denom()));
    let coeff = |k: u32| {
        h.terms()
            .find(|(e, _)| e[0] == k)
            .map(|(_, c)| (c * BigRational::from_integer(lcm.clone())).to_integer())
    };
    let (Some(a0), Some(an)) = (coeff(low), coeff(h.degree())) else {
        return roots;
    };
    for p in divisors(&a0) {
        for q in divisors(&an) {
            for s in [BigRational::new(p.clone(), q.clone()), -BigRational::new(p.clone(), q.clone())] {
                if h.eval(std::slice::from_ref(&s)).is_zero() && !roots.contains(&s) {
                    roots.push(s);
                }
            }
        }
    }
    roots
}

/// A point on `h = 0`, if one can be found exactly: rational roots for
/// univariate constraints, otherwise solving for a variable that enters
/// linearly after fixing the others at random dyadic values.
fn zero_set_point(h: &Polynomial, rng: &mut ChaCha8Rng) -> Option<Vec<BigRational>> {
    let n = h.nvars();
    if n == 1 {
        let roots = rational_roots(h);
        if roots.is_empty() {
            return None;
        }
        return Some(vec![roots[rng.random_range(0..roots.len())].clone()]);
    }
    let i = (0..n).find(|&i| h.degree_in(i) == 1)?;
    for _ in 0..8 {
        let mut x: Vec<BigRational> = (0..n).map(|_| dyadic(rng, 24, 8)).collect();
        x[i] = BigRational::zero();
        let b = h.eval(&x);
        x[i] = BigRational::one();
        let a = h.eval(&x) - &b;
        if !a.is_zero() {
            x[i] = -b / a;
            return Some(x);
        }
    }
    None
}

/// Component of `v` orthogonal to `g`, exactly.
fn tangential(v: &[BigRational], g: &[BigRational]) -> Vec<BigRational> {
    let gg: BigRational = g.iter().map(|c| c * c).sum();
    if gg.is_zero() {
        return v.to_vec();
    }
    let gv: BigRational = g.iter().zip(v).map(|(a, b)| a * b).sum();
    let t = gv / gg;
    v.iter().zip(g).map(|(vi, gi)| vi - &t * gi).collect()
}

/// Sampled qualification check over `samples` points: half uniform dyadic
/// points with random directions, half forced onto a constraint's zero set
/// with random, tangential and axis directions. A failure is a proof of
/// violation; a pass is evidence only.
pub fn cq_sample_check(g: &LibraryFunction, samples: usize, seed: u64) -> CqSampleReport {
    let pieces = match extract_pieces(&g.program, &ExtractionLimits::default()) {
        Ok(p) => p,
        Err(e) => {
            return CqSampleReport { checked: 0, on_constraint: 0, outcome: CqOutcome::Inconclusive(e) }
        }
    };
    let mut constraints: Vec<Polynomial> = Vec::new();
    for p in &pieces {
        for (h, _) in &p.constraints {
            if !constraints.contains(h) {
                constraints.push(h.clone());
            }
        }
    }
    let n = g.arity;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut on_constraint = 0;
    while checked < samples {
        let forced = checked % 2 == 1 && !constraints.is_empty();
        let (x, on) = if forced {
            let h = &constraints[rng.random_range(0..constraints.len())];
            match zero_set_point(h, &mut rng) {
                Some(x) => {
                    let v = match rng.random_range(0..3) {
                        0 => random_direction(&mut rng, n),
                        1 => {
                            let t = tangential(&random_direction(&mut rng, n), &h.gradient_at(&x));
                            if t.iter().all(Zero::is_zero) {
                                random_direction(&mut rng, n)
                            } else {
                                t
                            }
                        }
                        _ => {
                            let mut e = vec![BigRational::zero(); n];
                            let k = rng.random_range(0..n);
                            e[k] = if rng.random_bool(0.5) { One::one() } else { -BigRational::one() };
                            e
                        }
                    };
                    ((x, v), true)
                }
                None => (((0..n).map(|_| dyadic(&mut rng, 24, 8)).collect(), random_direction(&mut rng, n)), false),
            }
        } else {
            (((0..n).map(|_| dyadic(&mut rng, 24, 8)).collect(), random_direction(&mut rng, n)), false)
        };
        let (x, v) = x;
        checked += 1;
        if on {
            on_constraint += 1;
        }
        let outcome = cq_diagnostic_pieces(&pieces, &x, &v);
        if !outcome.is_pass() {
            return CqSampleReport { checked, on_constraint, outcome };
        }
    }
    CqSampleReport { checked, on_constraint, outcome: CqOutcome::Pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{evaluate_branch, CostMeter};

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    fn eval(lib: &LibraryRegistry, name: &str, x: &[f64]) -> (f64, BranchTrace) {
        evaluate_branch(&lib.get(name).unwrap().program, x, &mut CostMeter::new()).unwrap()
    }

    #[test]
    fn builtin_values() {
        let lib = builtin_registry();
        assert_eq!(eval(&lib, "relu", &[-3.0]).0, 0.0);
        assert_eq!(eval(&lib, "max2", &[2.0, 5.0]).0, 5.0);
        assert_eq!(eval(&lib, "min2", &[2.0, 5.0]).0, 2.0);
        assert_eq!(eval(&lib, "abs", &[-2.5]).0, 2.5);
        assert_eq!(eval(&lib, "clip", &[-7.0]).0, -1.0);
        assert_eq!(eval(&lib, "clip", &[0.25]).0, 0.25);
        assert_eq!(eval(&lib, "clip", &[3.0]).0, 1.0);
        assert_eq!(eval(&lib, "hinge_sq", &[3.0]).0, 9.0);
        assert_eq!(eval(&lib, "ramp_sq", &[0.5]).0, 0.5);
        assert!(!lib.get("relu_bad").unwrap().claims_qualified);
    }

    #[test]
    fn fig1_relu_programs() {
        let lib = builtin_registry();
        assert_eq!(eval(&lib, "relu", &[-2.0]), (0.0, BranchTrace::new(vec![Sign::Neg])));
        assert_eq!(eval(&lib, "relu", &[0.0]), (0.0, BranchTrace::new(vec![Sign::Pos])));
        assert_eq!(eval(&lib, "relu_bad", &[-2.0]), (0.0, BranchTrace::new(vec![Sign::Neg])));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut lib = builtin_registry();
        let relu = lib.get("relu").unwrap().clone();
        assert_eq!(lib.register(relu), Err(RegistryError::Duplicate("relu".into())));
    }

    #[test]
    fn ladder_as_relu() {
        let x = Polynomial::var(1, 0);
        let g = make_piecewise_poly("r", &[0.0], &[Polynomial::zero(1), x]).unwrap();
        let lib = builtin_registry();
        for t in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let (a, _) = evaluate_branch(&g.program, &[t], &mut CostMeter::new()).unwrap();
            assert_eq!(a, eval(&lib, "relu", &[t]).0);
        }
    }

    #[test]
    fn ladder_rejects_bad_input() {
        let x = Polynomial::var(1, 0);
        let one = Polynomial::constant_f64(1, 1.0);
        assert_eq!(
            make_piecewise_poly("g", &[-1.0, 1.0], &[&(-&x) - &one, x.clone(), x.clone()]),
            Err(PiecewiseError::Discontinuous { index: 0, breakpoint: -1.0 })
        );
        assert_eq!(
            make_piecewise_poly("g", &[1.0, 1.0], &[x.clone(), x.clone(), x.clone()]),
            Err(PiecewiseError::NonMonotone(1))
        );
        assert_eq!(
            make_piecewise_poly("g", &[], &[]),
            Err(PiecewiseError::NoPieces)
        );
        let third = Polynomial::constant(1, q(1, 3));
        assert_eq!(
            make_piecewise_poly("g", &[], &[third]),
            Err(PiecewiseError::NonRepresentable(0))
        );
    }

    #[test]
    fn ladder_matches_interval_lookup_on_grid() {
        let lowered = [vec![-3.0, -2.0], vec![-2.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 0.25]];
        let pieces: Vec<Polynomial> = lowered.iter().map(|c| Polynomial::univariate_f64(c)).collect();
        let g = make_piecewise_poly("g", &[-1.0, 2.0], &pieces).unwrap();
        let bps = [-1.0, 2.0];
        for k in 0..10_000 {
            let t = -4.0 + 8.0 * (k as f64) / 9_999.0;
            let idx = bps.iter().position(|&b| t <= b).unwrap_or(bps.len());
            let want = piece_value_f64(&lowered[idx], t);
            let (got, _) = evaluate_branch(&g.program, &[t], &mut CostMeter::new()).unwrap();
            assert_eq!(got.to_bits(), want.to_bits(), "at {t}");
        }
    }

    #[test]
    fn cq_examples() {
        let lib = builtin_registry();
        let relu = lib.get("relu").unwrap();
        assert!(cq_diagnostic(relu, &[q(0, 1)], &[q(-1, 1)]).is_pass());
        let abs = lib.get("abs").unwrap();
        assert!(cq_diagnostic(abs, &[q(0, 1)], &[q(1, 1)]).is_pass());
        let bad = lib.get("relu_bad").unwrap();
        match cq_diagnostic(bad, &[q(0, 1)], &[q(-1, 1)]) {
            CqOutcome::Fail(w) => {
                assert_eq!(w.constraint, Polynomial::var(1, 0).pow(3));
                assert_eq!((w.limiting, w.first_order), (Sign::Neg, Sign::Pos));
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn sampled_check_reaches_constraint_zero_sets() {
        let lib = builtin_registry();
        let report = cq_sample_check(lib.get("max2").unwrap(), 200, 3);
        assert!(report.outcome.is_pass());
        assert_eq!(report.on_constraint, 100);
        let report = cq_sample_check(lib.get("relu_bad").unwrap(), 1000, 0);
        assert!(!report.outcome.is_pass());
    }

    #[test]
    fn rational_root_finder() {
        // (x - 1/2)(x + 3) = x^2 + 5/2 x - 3/2
        let h = Polynomial::univariate(&[q(-3, 2), q(5, 2), q(1, 1)]);
        let mut roots = rational_roots(&h);
        roots.sort();
        assert_eq!(roots, vec![q(-3, 1), q(1, 2)]);
        assert_eq!(rational_roots(&Polynomial::var(1, 0).pow(3)), vec![q(0, 1)]);
    }
}
