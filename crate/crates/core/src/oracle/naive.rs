use std::collections::BTreeMap;

use super::OracleError;
use crate::asd::{asd_library, reverse_mode, AsdOptions, Tape};
use crate::graph::{affine_value, monomial_value, CostMeter, EvalError, Instruction, NodeId, ProgramDef};
use crate::library::LibraryRegistry;

/// Fixed local derivatives used at library kinks, as a framework would.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveConvention {
    /// Gradient reported by a library call whose evaluation hit a tie.
    pub kinks: BTreeMap<String, Vec<f64>>,
    /// Without an entry, use the gradient of the `sign(0) = +1` branch
    /// instead of failing.
    pub fallback_taken_branch: bool,
}

impl Default for NaiveConvention {
    /// `relu'(0) = 0`, `abs'(0) = 1`, `max2`/`min2` split evenly.
    fn default() -> Self {
        NaiveConvention::with_relu_zero(0.0)
    }
}

impl NaiveConvention {
    pub fn with_relu_zero(c: f64) -> Self {
        let kinks = [
            ("relu", vec![c]),
            ("relu_bad", vec![c]),
            ("abs", vec![1.0]),
            ("max2", vec![0.5, 0.5]),
            ("min2", vec![0.5, 0.5]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        NaiveConvention { kinks, fallback_taken_branch: true }
    }

    /// No entries and no fallback: every kink is an error.
    pub fn strict() -> Self {
        NaiveConvention { kinks: BTreeMap::new(), fallback_taken_branch: false }
    }

    pub fn set(&mut self, name: &str, gradient: Vec<f64>) {
        self.kinks.insert(name.to_string(), gradient);
    }
}

fn monomial_partials(coefficient: f64, factors: &[(NodeId, u32)], vals: &[f64]) -> Vec<(usize, f64)> {
    (0..factors.len())
        .map(|i| {
            let mut p = coefficient;
            for (j, &(n, e)) in factors.iter().enumerate() {
                let x = vals[n.0];
                p *= if i == j { e as f64 * x.powi(e as i32 - 1) } else { x.powi(e as i32) };
            }
            (factors[i].0 .0, p)
        })
        .collect()
}

/// Reverse mode with `sign(0) = +1` evaluation and the convention's fixed
/// gradient at every library call that ties. No direction is used.
pub fn naive_ad(
    prog: &ProgramDef,
    x: &[f64],
    lib: &LibraryRegistry,
    convention: &NaiveConvention,
) -> Result<Vec<f64>, OracleError> {
    let d = prog.input_arity;
    if x.len() != d {
        return Err(OracleError::Dimension { expected: d, found: x.len() });
    }
    let mut vals: Vec<f64> = x.to_vec();
    let mut tape = Tape::new(x);
    let mut meter = CostMeter::new();
    for (i, ins) in prog.instructions.iter().enumerate() {
        let at = NodeId(d + i);
        for p in ins.parents() {
            if p.0 >= vals.len() {
                return Err(EvalError::BadReference { node: at, reads: p }.into());
            }
        }
        let (value, parents) = match ins {
            Instruction::Affine { constant, terms } => (
                affine_value(*constant, terms, &vals, at, &mut meter)?,
                terms.iter().map(|&(c, n)| (n.0, c)).collect(),
            ),
            Instruction::Monomial { coefficient, factors } => (
                monomial_value(*coefficient, factors, &vals, at, &mut meter)?,
                monomial_partials(*coefficient, factors, &vals),
            ),
            Instruction::LibCall { name, args } => {
                let g = lib.get(name).ok_or_else(|| EvalError::UnknownLibrary(name.clone()))?;
                if g.arity != args.len() {
                    return Err(EvalError::CallArity {
                        name: name.clone(),
                        expected: g.arity,
                        found: args.len(),
                    }
                    .into());
                }
                let xs: Vec<f64> = args.iter().map(|a| vals[a.0]).collect();
                let run = asd_library(g, &xs, &vec![0.0; g.arity], &AsdOptions::default())?;
                let u = if run.ties == 0 {
                    run.output.u
                } else if let Some(c) = convention.kinks.get(name) {
                    if c.len() != g.arity {
                        return Err(OracleError::Dimension { expected: g.arity, found: c.len() });
                    }
                    c.clone()
                } else if convention.fallback_taken_branch {
                    run.output.u
                } else {
                    return Err(OracleError::MissingConvention(name.clone()));
                };
                (run.output.a, args.iter().map(|a| a.0).zip(u).collect())
            }
        };
        vals.push(value);
        tape.push(value, parents);
    }
    let out = prog.output;
    if out.0 >= vals.len() {
        return Err(EvalError::UndefinedOutput(out).into());
    }
    tape.set_output(out.0);
    Ok(reverse_mode(&tape, &mut meter).map_err(crate::asd::AsdError::from)?)
}
