//! Program representations and their exact semantics.
//!
//! A [`ProgramDef`] is a straight-line SSA program over inputs `n1..nd`:
//! every instruction is an affine map, a monomial, or a call into a library
//! function. Library functions are [`BranchProgram`]s: straight-line segments
//! joined by sign tests on the most recently computed node.

mod branch;
mod cost;
pub(crate) mod eval;
mod pieces;
mod poly;

use std::fmt;

pub use branch::{BranchProgram, BranchProgramError, BranchTrace, Sign, Step};
pub use cost::CostMeter;
pub use eval::{affine_value, evaluate, evaluate_branch, monomial_value, EvalError, Evaluation};
pub use pieces::{
    extract_pieces, extract_program_pieces, limiting_sign, piece_select, ExtractionError,
    ExtractionLimits, PieceDescription, PieceSelectError,
};
pub use poly::Polynomial;

use crate::library::LibraryRegistry;

/// Index of a node in a program. Zero-based; displayed one-based as `n<k>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Node from its one-based DSL number.
    pub fn from_dsl(k: usize) -> Option<Self> {
        k.checked_sub(1).map(NodeId)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn dsl_number(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0 + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    /// `constant + Σ coefficient · node`. Zero terms is a constant.
    Affine { constant: f64, terms: Vec<(f64, NodeId)> },
    /// `coefficient · Π node^exponent`, exponents at least one.
    Monomial { coefficient: f64, factors: Vec<(NodeId, u32)> },
    LibCall { name: String, args: Vec<NodeId> },
}

impl Instruction {
    pub fn affine(constant: f64, terms: &[(f64, usize)]) -> Self {
        Instruction::Affine {
            constant,
            terms: terms.iter().map(|&(c, k)| (c, NodeId(k))).collect(),
        }
    }

    pub fn monomial(coefficient: f64, factors: &[(usize, u32)]) -> Self {
        Instruction::Monomial {
            coefficient,
            factors: factors.iter().map(|&(k, e)| (NodeId(k), e)).collect(),
        }
    }

    pub fn call(name: &str, args: &[usize]) -> Self {
        Instruction::LibCall {
            name: name.to_string(),
            args: args.iter().map(|&k| NodeId(k)).collect(),
        }
    }

    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            Instruction::Affine { terms, .. } => terms.iter().map(|&(_, n)| n).collect(),
            Instruction::Monomial { factors, .. } => factors.iter().map(|&(n, _)| n).collect(),
            Instruction::LibCall { args, .. } => args.clone(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Instruction::LibCall { .. })
    }

    fn constants(&self) -> Vec<f64> {
        match self {
            Instruction::Affine { constant, terms } => {
                std::iter::once(*constant).chain(terms.iter().map(|&(c, _)| c)).collect()
            }
            Instruction::Monomial { coefficient, .. } => vec![*coefficient],
            Instruction::LibCall { .. } => Vec::new(),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Affine { constant, terms } => {
                write!(f, "affine {constant:?}")?;
                for (c, n) in terms {
                    write!(f, " {c:?} {n}")?;
                }
                Ok(())
            }
            Instruction::Monomial { coefficient, factors } => {
                write!(f, "mono {coefficient:?}")?;
                for (n, e) in factors {
                    if *e == 1 {
                        write!(f, " {n}")?;
                    } else {
                        write!(f, " {n}^{e}")?;
                    }
                }
                Ok(())
            }
            Instruction::LibCall { name, args } => {
                write!(f, "call {name}")?;
                for n in args {
                    write!(f, " {n}")?;
                }
                Ok(())
            }
        }
    }
}

/// Straight-line program: inputs `0..input_arity`, then one node per
/// instruction in order, returning `output`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramDef {
    pub input_arity: usize,
    pub instructions: Vec<Instruction>,
    pub output: NodeId,
}

impl ProgramDef {
    pub fn new(input_arity: usize, instructions: Vec<Instruction>, output: NodeId) -> Self {
        ProgramDef { input_arity, instructions, output }
    }

    pub fn node_count(&self) -> usize {
        self.input_arity + self.instructions.len()
    }

    /// Instruction defining `node`, `None` for inputs.
    pub fn instruction(&self, node: NodeId) -> Option<&Instruction> {
        node.0.checked_sub(self.input_arity).and_then(|i| self.instructions.get(i))
    }

    pub fn is_smooth(&self) -> bool {
        self.instructions.iter().all(Instruction::is_smooth)
    }

    pub fn library_calls(&self) -> impl Iterator<Item = (NodeId, &str, &[NodeId])> {
        self.instructions.iter().enumerate().filter_map(move |(i, ins)| match ins {
            Instruction::LibCall { name, args } => {
                Some((NodeId(self.input_arity + i), name.as_str(), args.as_slice()))
            }
            _ => None,
        })
    }
}

impl fmt::Display for ProgramDef {
    /// Renders the program in the text DSL accepted by [`crate::dsl`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "inputs {}", self.input_arity)?;
        for (i, ins) in self.instructions.iter().enumerate() {
            writeln!(f, "{} = {}", NodeId(self.input_arity + i), ins)?;
        }
        writeln!(f, "output {}", self.output)
    }
}

/// Incremental construction helper; returns the id of each new node.
#[derive(Clone, Debug)]
pub struct ProgramBuilder {
    input_arity: usize,
    instructions: Vec<Instruction>,
}

impl ProgramBuilder {
    pub fn new(input_arity: usize) -> Self {
        ProgramBuilder { input_arity, instructions: Vec::new() }
    }

    pub fn input(&self, i: usize) -> NodeId {
        assert!(i < self.input_arity, "input {i} out of range");
        NodeId(i)
    }

    pub fn push(&mut self, ins: Instruction) -> NodeId {
        self.instructions.push(ins);
        NodeId(self.input_arity + self.instructions.len() - 1)
    }

    pub fn affine(&mut self, constant: f64, terms: &[(f64, NodeId)]) -> NodeId {
        self.push(Instruction::Affine { constant, terms: terms.to_vec() })
    }

    pub fn mono(&mut self, coefficient: f64, factors: &[(NodeId, u32)]) -> NodeId {
        self.push(Instruction::Monomial { coefficient, factors: factors.to_vec() })
    }

    pub fn call(&mut self, name: &str, args: &[NodeId]) -> NodeId {
        self.push(Instruction::LibCall { name: name.to_string(), args: args.to_vec() })
    }

    pub fn finish(self, output: NodeId) -> ProgramDef {
        ProgramDef::new(self.input_arity, self.instructions, output)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoInputs,
    ForwardReference { node: NodeId, reads: NodeId },
    ArityMismatch { node: NodeId, name: String, expected: usize, found: usize },
    UnknownLibrary { node: NodeId, name: String },
    UndefinedOutput { output: NodeId },
    ZeroExponent { node: NodeId },
    NonFiniteConstant { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoInputs => write!(f, "program has no inputs"),
            Violation::ForwardReference { node, reads } => write!(
                f,
                "forward reference at node {} (reads node {})",
                node.dsl_number(),
                reads.dsl_number()
            ),
            Violation::ArityMismatch { node, name, expected, found } => write!(
                f,
                "arity mismatch at node {}: {name} takes {expected} argument(s), got {found}",
                node.dsl_number()
            ),
            Violation::UnknownLibrary { node, name } => {
                write!(f, "unknown library function {name:?} at node {}", node.dsl_number())
            }
            Violation::UndefinedOutput { output } => {
                write!(f, "output node {} is not defined", output.dsl_number())
            }
            Violation::ZeroExponent { node } => {
                write!(f, "monomial exponent 0 at node {}", node.dsl_number())
            }
            Violation::NonFiniteConstant { node } => {
                write!(f, "non-finite constant at node {}", node.dsl_number())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every structural problem with `prog` against `lib`.
pub fn validate(prog: &ProgramDef, lib: &LibraryRegistry) -> ValidationReport {
    let mut violations = Vec::new();
    if prog.input_arity == 0 {
        violations.push(Violation::NoInputs);
    }
    for (i, ins) in prog.instructions.iter().enumerate() {
        let node = NodeId(prog.input_arity + i);
        for reads in ins.parents() {
            if reads >= node {
                violations.push(Violation::ForwardReference { node, reads });
            }
        }
        if ins.constants().iter().any(|c| !c.is_finite()) {
            violations.push(Violation::NonFiniteConstant { node });
        }
        match ins {
            Instruction::Monomial { factors, .. } => {
                if factors.iter().any(|&(_, e)| e == 0) {
                    violations.push(Violation::ZeroExponent { node });
                }
            }
            Instruction::LibCall { name, args } => match lib.get(name) {
                None => violations.push(Violation::UnknownLibrary { node, name: name.clone() }),
                Some(g) if g.arity != args.len() => violations.push(Violation::ArityMismatch {
                    node,
                    name: name.clone(),
                    expected: g.arity,
                    found: args.len(),
                }),
                Some(_) => {}
            },
            Instruction::Affine { .. } => {}
        }
    }
    if prog.output.0 >= prog.node_count() {
        violations.push(Violation::UndefinedOutput { output: prog.output });
    }
    ValidationReport { violations }
}
