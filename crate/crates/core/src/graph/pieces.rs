//! Symbolic piece extraction: a branching program as a finite sum of
//! polynomials restricted to sign-defined regions.

use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use super::{BranchProgram, BranchTrace, Instruction, NodeId, Polynomial, ProgramDef, Sign, Step};
use crate::library::LibraryRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtractionLimits {
    /// Maximum number of branch nodes, summed over every library call.
    pub max_branches: usize,
    /// Maximum number of terms in any intermediate polynomial.
    pub max_terms: usize,
    /// Maximum number of paths, feasible or not.
    pub max_pieces: usize,
}

impl Default for ExtractionLimits {
    fn default() -> Self {
        ExtractionLimits { max_branches: 20, max_terms: 100_000, max_pieces: 1 << 16 }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExtractionError {
    #[error("{found} branch nodes exceed the extraction bound of {limit}")]
    TooManyBranches { found: usize, limit: usize },
    #[error("a symbolic intermediate exceeds {limit} terms")]
    TermLimit { limit: usize },
    #[error("more than {limit} pieces")]
    TooManyPieces { limit: usize },
    #[error("unknown library function {0:?}")]
    UnknownLibrary(String),
    #[error("{name} takes {expected} argument(s), called with {found}")]
    CallArity { name: String, expected: usize, found: usize },
    #[error("node {node} reads undefined node {reads}")]
    BadReference { node: NodeId, reads: NodeId },
}

/// One region of a piecewise-polynomial program: every constraint
/// `sign(h(x)) = s` (with `sign(0) = +1`) holds exactly where the program
/// follows `word` and returns `piece(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PieceDescription {
    /// Concatenated branch words of every library call, in program order.
    pub word: BranchTrace,
    /// The same word split per library call.
    pub call_words: Vec<BranchTrace>,
    pub constraints: Vec<(Polynomial, Sign)>,
    pub piece: Polynomial,
}

impl PieceDescription {
    /// Whether `x` lies in this piece's region.
    pub fn contains(&self, x: &[BigRational]) -> bool {
        self.constraints.iter().all(|(h, s)| Sign::of(&h.eval(x)) == *s)
    }

    /// Whether the ray `x + δv` lies in this piece's region for all small `δ > 0`.
    pub fn selected_by(&self, x: &[BigRational], v: &[BigRational]) -> bool {
        self.constraints.iter().all(|(h, s)| limiting_sign(h, x, v) == *s)
    }

    pub fn gradient_at(&self, x: &[BigRational]) -> Vec<BigRational> {
        self.piece.gradient_at(x)
    }
}

impl fmt::Display for PieceDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z={} p={}", self.word, self.piece)?;
        for (h, s) in &self.constraints {
            let rel = match s {
                Sign::Pos => ">= 0",
                Sign::Neg => "< 0",
            };
            write!(f, "; {h} {rel}")?;
        }
        Ok(())
    }
}

/// `lim_{δ↓0} sign(h(x + δv))`, exactly: the sign of the lowest-order nonzero
/// coefficient of `δ ↦ h(x + δv)`, or `+1` if the restriction vanishes.
pub fn limiting_sign(h: &Polynomial, x: &[BigRational], v: &[BigRational]) -> Sign {
    h.along_line(x, v)
        .into_iter()
        .find(|c| !c.is_zero())
        .map_or(Sign::Pos, |c| if c.is_negative() { Sign::Neg } else { Sign::Pos })
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PieceSelectError {
    #[error("no piece is selected: the piece set is inconsistent")]
    NoPiece,
    #[error("{0} pieces are selected: the piece set is inconsistent")]
    MultiplePieces(usize),
}

/// The unique piece entered along `x + δv` as `δ ↓ 0`.
pub fn piece_select<'a>(
    pieces: &'a [PieceDescription],
    x: &[BigRational],
    v: &[BigRational],
) -> Result<&'a PieceDescription, PieceSelectError> {
    let mut hits = pieces.iter().filter(|p| p.selected_by(x, v));
    let first = hits.next().ok_or(PieceSelectError::NoPiece)?;
    let extra = hits.count();
    if extra > 0 {
        return Err(PieceSelectError::MultiplePieces(extra + 1));
    }
    Ok(first)
}

struct Path {
    word: BranchTrace,
    constraints: Vec<(Polynomial, Sign)>,
    value: Polynomial,
}

fn checked(p: Polynomial, limits: &ExtractionLimits) -> Result<Polynomial, ExtractionError> {
    if p.num_terms() > limits.max_terms {
        Err(ExtractionError::TermLimit { limit: limits.max_terms })
    } else {
        Ok(p)
    }
}

fn read(vals: &[Polynomial], node: NodeId, at: NodeId) -> Result<&Polynomial, ExtractionError> {
    vals.get(node.0).ok_or(ExtractionError::BadReference { node: at, reads: node })
}

fn smooth_poly(
    ins: &Instruction,
    vals: &[Polynomial],
    nvars: usize,
    at: NodeId,
    limits: &ExtractionLimits,
) -> Result<Polynomial, ExtractionError> {
    match ins {
        Instruction::Affine { constant, terms } => {
            let mut acc = Polynomial::constant_f64(nvars, *constant);
            for &(c, n) in terms {
                let c = BigRational::from_float(c).expect("finite coefficient");
                acc = checked(&acc + &read(vals, n, at)?.scale(&c), limits)?;
            }
            Ok(acc)
        }
        Instruction::Monomial { coefficient, factors } => {
            let mut acc = Polynomial::constant_f64(nvars, *coefficient);
            for &(n, e) in factors {
                let base = read(vals, n, at)?;
                for _ in 0..e {
                    acc = checked(&acc * base, limits)?;
                }
            }
            Ok(acc)
        }
        Instruction::LibCall { name, .. } => Err(ExtractionError::UnknownLibrary(name.clone())),
    }
}

/// Every root-to-leaf path of `bp` applied to symbolic arguments.
fn branch_paths(
    bp: &BranchProgram,
    args: &[Polynomial],
    limits: &ExtractionLimits,
) -> Result<Vec<Path>, ExtractionError> {
    let nvars = args.first().map_or(0, Polynomial::nvars);
    let mut out = Vec::new();
    let mut stack = vec![(bp.body(), args.to_vec(), BranchTrace::default(), Vec::new())];
    while let Some((step, mut vals, word, constraints)) = stack.pop() {
        match step {
            Step::Compute { instr, next } => {
                let at = NodeId(vals.len());
                let p = smooth_poly(instr, &vals, nvars, at, limits)?;
                vals.push(p);
                stack.push((next, vals, word, constraints));
            }
            Step::Branch { test, then_step, else_step } => {
                let h = read(&vals, *test, NodeId(vals.len()))?.clone();
                let mut neg_word = word.clone();
                neg_word.push(Sign::Neg);
                let mut neg_cons = constraints.clone();
                neg_cons.push((h.clone(), Sign::Neg));
                stack.push((else_step, vals.clone(), neg_word, neg_cons));
                let mut pos_word = word;
                pos_word.push(Sign::Pos);
                let mut pos_cons = constraints;
                pos_cons.push((h, Sign::Pos));
                stack.push((then_step, vals, pos_word, pos_cons));
            }
            Step::Return(n) => {
                let value = read(&vals, *n, NodeId(vals.len()))?.clone();
                out.push(Path { word, constraints, value });
                if out.len() > limits.max_pieces {
                    return Err(ExtractionError::TooManyPieces { limit: limits.max_pieces });
                }
            }
        }
    }
    Ok(out)
}

/// Pieces of a single library program, over its own inputs.
pub fn extract_pieces(
    bp: &BranchProgram,
    limits: &ExtractionLimits,
) -> Result<Vec<PieceDescription>, ExtractionError> {
    if bp.branch_count() > limits.max_branches {
        return Err(ExtractionError::TooManyBranches {
            found: bp.branch_count(),
            limit: limits.max_branches,
        });
    }
    let n = bp.input_arity();
    let args: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
    Ok(branch_paths(bp, &args, limits)?
        .into_iter()
        .map(|p| PieceDescription {
            call_words: vec![p.word.clone()],
            word: p.word,
            constraints: p.constraints,
            piece: p.value,
        })
        .collect())
}

/// Pieces of a whole program, composing every library call's pieces with the
/// symbolic values of its arguments. Paths whose constraints are jointly
/// infeasible are kept; they never win [`piece_select`].
pub fn extract_program_pieces(
    prog: &ProgramDef,
    lib: &LibraryRegistry,
    limits: &ExtractionLimits,
) -> Result<Vec<PieceDescription>, ExtractionError> {
    let mut total = 0;
    for (_, name, args) in prog.library_calls() {
        let g = lib.get(name).ok_or_else(|| ExtractionError::UnknownLibrary(name.to_string()))?;
        if g.arity != args.len() {
            return Err(ExtractionError::CallArity {
                name: name.to_string(),
                expected: g.arity,
                found: args.len(),
            });
        }
        total += g.program.branch_count();
    }
    if total > limits.max_branches {
        return Err(ExtractionError::TooManyBranches { found: total, limit: limits.max_branches });
    }

    let d = prog.input_arity;
    let inputs: Vec<Polynomial> = (0..d).map(|i| Polynomial::var(d, i)).collect();
    let mut states = vec![(inputs, Vec::<BranchTrace>::new(), Vec::<(Polynomial, Sign)>::new())];
    for (i, ins) in prog.instructions.iter().enumerate() {
        let at = NodeId(d + i);
        let mut next = Vec::with_capacity(states.len());
        for (mut vals, words, constraints) in states {
            match ins {
                Instruction::LibCall { name, args } => {
                    let g = lib.get(name).expect("checked above");
                    let argv = args
                        .iter()
                        .map(|&a| read(&vals, a, at).cloned())
                        .collect::<Result<Vec<_>, _>>()?;
                    for path in branch_paths(&g.program, &argv, limits)? {
                        let mut vals = vals.clone();
                        vals.push(path.value);
                        let mut words = words.clone();
                        words.push(path.word);
                        let mut cons = constraints.clone();
                        cons.extend(path.constraints);
                        next.push((vals, words, cons));
                        if next.len() > limits.max_pieces {
                            return Err(ExtractionError::TooManyPieces { limit: limits.max_pieces });
                        }
                    }
                }
                _ => {
                    let p = smooth_poly(ins, &vals, d, at, limits)?;
                    vals.push(p);
                    next.push((vals, words, constraints));
                }
            }
        }
        states = next;
    }
    states
        .into_iter()
        .map(|(vals, call_words, constraints)| {
            let piece = vals
                .get(prog.output.0)
                .cloned()
                .ok_or(ExtractionError::BadReference { node: prog.output, reads: prog.output })?;
            let word = BranchTrace::new(call_words.iter().flat_map(|w| w.word.clone()).collect());
            Ok(PieceDescription { word, call_words, constraints, piece })
        })
        .collect()
}
