use std::fmt;

use thiserror::Error;

use super::{Instruction, NodeId};

/// Outcome of one sign test. `Pos` covers zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }

    /// `sign(value)` with `sign(0) = +1`.
    pub fn of<S: PartialOrd + num_traits::Zero>(value: &S) -> Sign {
        if *value >= S::zero() {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Neg => "-1",
            Sign::Pos => "+1",
        })
    }
}

/// Branch word of one execution: one sign per test taken, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BranchTrace {
    pub word: Vec<Sign>,
}

impl BranchTrace {
    pub fn new(word: Vec<Sign>) -> Self {
        BranchTrace { word }
    }

    pub fn push(&mut self, s: Sign) {
        self.word.push(s);
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Word padded with `-1` up to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<Sign> {
        let mut w = self.word.clone();
        if w.len() < len {
            w.resize(len, Sign::Neg);
        }
        w
    }

    pub fn as_i8(&self) -> Vec<i8> {
        self.word.iter().map(|s| s.as_i8()).collect()
    }
}

impl fmt::Display for BranchTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.word.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// One step of a branching program. Node numbering along every path is
/// dense: the inputs, then one node per `Compute` on that path.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Compute { instr: Instruction, next: Box<Step> },
    /// Tests `test >= 0`; `test` must be the most recently computed node.
    Branch { test: NodeId, then_step: Box<Step>, else_step: Box<Step> },
    Return(NodeId),
}

impl Step {
    pub fn compute(instr: Instruction, next: Step) -> Step {
        Step::Compute { instr, next: Box::new(next) }
    }

    pub fn branch(test: usize, then_step: Step, else_step: Step) -> Step {
        Step::Branch {
            test: NodeId(test),
            then_step: Box::new(then_step),
            else_step: Box::new(else_step),
        }
    }

    pub fn ret(node: usize) -> Step {
        Step::Return(NodeId(node))
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum BranchProgramError {
    #[error("library functions need at least one input")]
    NoInputs,
    #[error("node {node} reads undefined node {reads}")]
    UndefinedRead { node: NodeId, reads: NodeId },
    #[error("branch tests {test}, but the most recently computed node is {latest}")]
    TestNotLatest { test: NodeId, latest: NodeId },
    #[error("return of undefined node {0}")]
    UndefinedReturn(NodeId),
    #[error("library bodies may only contain affine and monomial instructions (node {0})")]
    NestedCall(NodeId),
    #[error("monomial exponent 0 at node {0}")]
    ZeroExponent(NodeId),
    #[error("non-finite constant at node {0}")]
    NonFiniteConstant(NodeId),
}

/// Decision-tree program for a nonsmooth library function.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchProgram {
    input_arity: usize,
    body: Step,
    step_bound: usize,
    branch_count: usize,
}

impl BranchProgram {
    /// Checks every root-to-leaf path is a valid SSA program whose tests read
    /// the node computed just before them.
    pub fn new(input_arity: usize, body: Step) -> Result<Self, BranchProgramError> {
        if input_arity == 0 {
            return Err(BranchProgramError::NoInputs);
        }
        let (step_bound, branch_count) = check_step(&body, input_arity)?;
        Ok(BranchProgram { input_arity, body, step_bound, branch_count })
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn body(&self) -> &Step {
        &self.body
    }

    /// Longest path length, counting computes and tests.
    pub fn step_bound(&self) -> usize {
        self.step_bound
    }

    /// Number of `Branch` nodes in the tree.
    pub fn branch_count(&self) -> usize {
        self.branch_count
    }
}

fn check_step(step: &Step, defined: usize) -> Result<(usize, usize), BranchProgramError> {
    match step {
        Step::Compute { instr, next } => {
            let node = NodeId(defined);
            match instr {
                Instruction::LibCall { .. } => return Err(BranchProgramError::NestedCall(node)),
                Instruction::Monomial { factors, coefficient } => {
                    if factors.iter().any(|&(_, e)| e == 0) {
                        return Err(BranchProgramError::ZeroExponent(node));
                    }
                    if !coefficient.is_finite() {
                        return Err(BranchProgramError::NonFiniteConstant(node));
                    }
                }
                Instruction::Affine { constant, terms } => {
                    if !constant.is_finite() || terms.iter().any(|(c, _)| !c.is_finite()) {
                        return Err(BranchProgramError::NonFiniteConstant(node));
                    }
                }
            }
            if let Some(reads) = instr.parents().into_iter().find(|p| p.0 >= defined) {
                return Err(BranchProgramError::UndefinedRead { node, reads });
            }
            let (len, branches) = check_step(next, defined + 1)?;
            Ok((len + 1, branches))
        }
        Step::Branch { test, then_step, else_step } => {
            let latest = NodeId(defined - 1);
            if *test != latest {
                return Err(BranchProgramError::TestNotLatest { test: *test, latest });
            }
            let (a, ba) = check_step(then_step, defined)?;
            let (b, bb) = check_step(else_step, defined)?;
            Ok((1 + a.max(b), 1 + ba + bb))
        }
        Step::Return(node) => {
            if node.0 >= defined {
                return Err(BranchProgramError::UndefinedReturn(*node));
            }
            Ok((0, 0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_must_read_latest_node() {
        // inputs 2; n3 = n1 + n2; branch n1 -> rejected
        let body = Step::compute(
            Instruction::affine(0.0, &[(1.0, 0), (1.0, 1)]),
            Step::branch(0, Step::ret(0), Step::ret(1)),
        );
        assert_eq!(
            BranchProgram::new(2, body),
            Err(BranchProgramError::TestNotLatest { test: NodeId(0), latest: NodeId(2) })
        );
    }

    #[test]
    fn paths_number_nodes_independently() {
        // both arms define n2
        let body = Step::branch(
            0,
            Step::compute(Instruction::affine(0.0, &[(2.0, 0)]), Step::ret(1)),
            Step::compute(Instruction::affine(0.0, &[]), Step::ret(1)),
        );
        let bp = BranchProgram::new(1, body).unwrap();
        assert_eq!(bp.step_bound(), 2);
        assert_eq!(bp.branch_count(), 1);
    }

    #[test]
    fn rejects_undefined_return_and_calls() {
        assert!(matches!(
            BranchProgram::new(1, Step::ret(3)),
            Err(BranchProgramError::UndefinedReturn(_))
        ));
        assert!(matches!(
            BranchProgram::new(1, Step::compute(Instruction::call("relu", &[0]), Step::ret(1))),
            Err(BranchProgramError::NestedCall(_))
        ));
    }

    #[test]
    fn trace_padding() {
        let t = BranchTrace::new(vec![Sign::Pos]);
        assert_eq!(t.padded(3), vec![Sign::Pos, Sign::Neg, Sign::Neg]);
        assert_eq!(t.to_string(), "[+1]");
    }
}
