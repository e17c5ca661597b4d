use thiserror::Error;

use super::{BranchProgram, BranchTrace, CostMeter, Instruction, NodeId, ProgramDef, Sign, Step};
use crate::library::LibraryRegistry;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("expected {expected} input(s), got {found}")]
    InputArity { expected: usize, found: usize },
    #[error("unknown library function {0:?}")]
    UnknownLibrary(String),
    #[error("{name} takes {expected} argument(s), called with {found}")]
    CallArity { name: String, expected: usize, found: usize },
    #[error("node {node} reads node {reads}, which is not yet defined")]
    BadReference { node: NodeId, reads: NodeId },
    #[error("output node {0} is not defined")]
    UndefinedOutput(NodeId),
}

/// Result of a plain forward evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<S> {
    pub value: S,
    /// Value of every program node, inputs first.
    pub nodes: Vec<S>,
    /// One branch word per library call, in program order.
    pub traces: Vec<BranchTrace>,
}

pub(crate) fn read<S: Clone>(vals: &[S], node: NodeId, at: NodeId) -> Result<S, EvalError> {
    vals.get(node.0).cloned().ok_or(EvalError::BadReference { node: at, reads: node })
}

/// `constant + Σ c·x`. Charges one multiplication per term and one addition
/// per `+` actually performed (a zero constant is not added).
pub fn affine_value<S: Scalar>(
    constant: f64,
    terms: &[(f64, NodeId)],
    vals: &[S],
    at: NodeId,
    meter: &mut CostMeter,
) -> Result<S, EvalError> {
    let mut acc: Option<S> = (constant != 0.0 || terms.is_empty()).then(|| S::from_f64(constant));
    for &(c, n) in terms {
        let term = S::from_f64(c) * read(vals, n, at)?;
        meter.mul(1);
        acc = Some(match acc {
            Some(a) => {
                meter.add(1);
                a + term
            }
            None => term,
        });
    }
    Ok(acc.expect("affine with no terms has a constant"))
}

/// Intermediates of a monomial evaluation, reused by the partial-derivative
/// kernels so value and partials share one multiplication order.
#[derive(Clone, Debug)]
pub(crate) struct MonomialParts<S> {
    pub value: S,
    /// `x_j^(e_j - 1)` for factors with exponent above one.
    pub lower_powers: Vec<Option<S>>,
    /// `x_j^e_j`.
    pub powers: Vec<S>,
    /// `c · y_1 ⋯ y_j` for j = 1..n.
    pub prefix: Vec<S>,
}

/// `c · Π x_j^e_j` with total degree `D` costs exactly `D` multiplications:
/// `e_j - 1` per power, then one per factor folded into the running product
/// seeded with the coefficient.
pub(crate) fn monomial_parts<S: Scalar>(
    coefficient: f64,
    factors: &[(NodeId, u32)],
    vals: &[S],
    at: NodeId,
    meter: &mut CostMeter,
) -> Result<MonomialParts<S>, EvalError> {
    let c = S::from_f64(coefficient);
    let mut lower_powers = Vec::with_capacity(factors.len());
    let mut powers = Vec::with_capacity(factors.len());
    for &(n, e) in factors {
        let x = read(vals, n, at)?;
        let mut pow = x.clone();
        let mut lower = None;
        for i in 1..e {
            if i == e - 1 {
                lower = Some(pow.clone());
            }
            pow = pow * x.clone();
            meter.mul(1);
        }
        lower_powers.push(lower);
        powers.push(pow);
    }
    let mut prefix = Vec::with_capacity(factors.len());
    let mut acc = c;
    for y in &powers {
        acc = acc * y.clone();
        meter.mul(1);
        prefix.push(acc.clone());
    }
    Ok(MonomialParts { value: acc, lower_powers, powers, prefix })
}

pub fn monomial_value<S: Scalar>(
    coefficient: f64,
    factors: &[(NodeId, u32)],
    vals: &[S],
    at: NodeId,
    meter: &mut CostMeter,
) -> Result<S, EvalError> {
    Ok(monomial_parts(coefficient, factors, vals, at, meter)?.value)
}

pub(crate) fn smooth_value<S: Scalar>(
    ins: &Instruction,
    vals: &[S],
    at: NodeId,
    meter: &mut CostMeter,
) -> Result<S, EvalError> {
    match ins {
        Instruction::Affine { constant, terms } => affine_value(*constant, terms, vals, at, meter),
        Instruction::Monomial { coefficient, factors } => {
            monomial_value(*coefficient, factors, vals, at, meter)
        }
        Instruction::LibCall { name, .. } => Err(EvalError::UnknownLibrary(name.clone())),
    }
}

/// Runs a branching program with `sign(0) = +1` tie-breaking. Each test
/// costs one unit.
pub fn evaluate_branch<S: Scalar>(
    bp: &BranchProgram,
    x: &[S],
    meter: &mut CostMeter,
) -> Result<(S, BranchTrace), EvalError> {
    if x.len() != bp.input_arity() {
        return Err(EvalError::InputArity { expected: bp.input_arity(), found: x.len() });
    }
    let mut vals: Vec<S> = x.to_vec();
    let mut trace = BranchTrace::default();
    let mut step = bp.body();
    loop {
        match step {
            Step::Compute { instr, next } => {
                let at = NodeId(vals.len());
                let v = smooth_value(instr, &vals, at, meter)?;
                vals.push(v);
                step = next;
            }
            Step::Branch { test, then_step, else_step } => {
                let at = NodeId(vals.len());
                let t = read(&vals, *test, at)?;
                meter.test(1);
                let s = Sign::of(&t);
                trace.push(s);
                step = if s == Sign::Pos { then_step } else { else_step };
            }
            Step::Return(n) => {
                let v = read(&vals, *n, NodeId(vals.len()))?;
                return Ok((v, trace));
            }
        }
    }
}

/// Forward evaluation of a straight-line program.
pub fn evaluate<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    lib: &LibraryRegistry,
    meter: &mut CostMeter,
) -> Result<Evaluation<S>, EvalError> {
    if x.len() != prog.input_arity {
        return Err(EvalError::InputArity { expected: prog.input_arity, found: x.len() });
    }
    let mut nodes: Vec<S> = x.to_vec();
    let mut traces = Vec::new();
    for ins in &prog.instructions {
        let at = NodeId(nodes.len());
        let v = match ins {
            Instruction::LibCall { name, args } => {
                let g = lib.get(name).ok_or_else(|| EvalError::UnknownLibrary(name.clone()))?;
                if g.arity != args.len() {
                    return Err(EvalError::CallArity {
                        name: name.clone(),
                        expected: g.arity,
                        found: args.len(),
                    });
                }
                let argv = args.iter().map(|&a| read(&nodes, a, at)).collect::<Result<Vec<_>, _>>()?;
                let (v, trace) = evaluate_branch(&g.program, &argv, meter)?;
                traces.push(trace);
                v
            }
            _ => smooth_value(ins, &nodes, at, meter)?,
        };
        nodes.push(v);
    }
    let value = nodes.get(prog.output.0).cloned().ok_or(EvalError::UndefinedOutput(prog.output))?;
    Ok(Evaluation { value, nodes, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ProgramBuilder;
    use crate::library::builtin_registry;

    fn eval1(prog: &ProgramDef, x: f64) -> (f64, Vec<BranchTrace>, u64) {
        let mut m = CostMeter::new();
        let e = evaluate(prog, &[x], &builtin_registry(), &mut m).unwrap();
        (e.value, e.traces, m.total())
    }

    #[test]
    fn identity_program() {
        let mut b = ProgramBuilder::new(1);
        let x = b.input(0);
        let y = b.affine(0.0, &[(1.0, x)]);
        let (v, traces, cost) = eval1(&b.finish(y), 0.0);
        assert_eq!(v, 0.0);
        assert!(traces.is_empty());
        assert_eq!(cost, 1);
    }

    #[test]
    fn f2_at_zero_takes_nonnegative_branches() {
        let mut b = ProgramBuilder::new(1);
        let x = b.input(0);
        let r1 = b.call("relu", &[x]);
        let neg = b.affine(0.0, &[(-1.0, x)]);
        let r2 = b.call("relu", &[neg]);
        let out = b.affine(0.0, &[(1.0, r1), (-1.0, r2)]);
        let (v, traces, _) = eval1(&b.finish(out), 0.0);
        assert_eq!(v, 0.0);
        assert_eq!(traces, vec![BranchTrace::new(vec![Sign::Pos]); 2]);
    }

    #[test]
    fn relu_of_square() {
        let mut b = ProgramBuilder::new(1);
        let x = b.input(0);
        let sq = b.mono(1.0, &[(x, 2)]);
        let r = b.call("relu", &[sq]);
        let (v, traces, cost) = eval1(&b.finish(r), 3.0);
        assert_eq!(v, 9.0);
        assert_eq!(traces[0].word, vec![Sign::Pos]);
        // x*x, 1*(x^2), one test
        assert_eq!(cost, 3);
    }

    #[test]
    fn monomial_cost_is_total_degree() {
        let mut m = CostMeter::new();
        let vals = [2.0, 3.0];
        let v = monomial_value(5.0, &[(NodeId(0), 3), (NodeId(1), 2)], &vals, NodeId(2), &mut m)
            .unwrap();
        assert_eq!(v, 5.0 * 8.0 * 9.0);
        assert_eq!(m.multiplications, 5);
    }

    #[test]
    fn affine_skips_zero_constant_addition() {
        let mut m = CostMeter::new();
        let vals = [2.0, 3.0];
        let terms = [(1.0, NodeId(0)), (-1.0, NodeId(1))];
        assert_eq!(affine_value(0.0, &terms, &vals, NodeId(2), &mut m).unwrap(), -1.0);
        assert_eq!((m.multiplications, m.additions), (2, 1));
        let mut m = CostMeter::new();
        assert_eq!(affine_value(1.5, &terms, &vals, NodeId(2), &mut m).unwrap(), 0.5);
        assert_eq!((m.multiplications, m.additions), (2, 2));
    }

    #[test]
    fn call_arity_checked_at_runtime() {
        let prog = ProgramDef::new(1, vec![Instruction::call("max2", &[0])], NodeId(1));
        let mut m = CostMeter::new();
        let err = evaluate(&prog, &[1.0], &builtin_registry(), &mut m).unwrap_err();
        assert!(matches!(err, EvalError::CallArity { expected: 2, found: 1, .. }));
    }

    #[test]
    fn evaluation_is_deterministic_in_cost() {
        let mut b = ProgramBuilder::new(2);
        let (x, y) = (b.input(0), b.input(1));
        let m = b.call("max2", &[x, y]);
        let p = b.mono(2.0, &[(m, 2), (x, 1)]);
        let prog = b.finish(p);
        let lib = builtin_registry();
        let totals: Vec<u64> = (0..5)
            .map(|_| {
                let mut meter = CostMeter::new();
                evaluate(&prog, &[0.5, -1.25], &lib, &mut meter).unwrap();
                meter.total()
            })
            .collect();
        assert!(totals.windows(2).all(|w| w[0] == w[1]));
    }
}
