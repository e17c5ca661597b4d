//! Text format for programs and library definitions.
//!
//! ```text
//! # comment
//! deflib relu2 1 {
//!   branch n1 {
//!     return n1
//!   } else {
//!     n2 = affine 0
//!     return n2
//!   }
//! }
//! inputs 2
//! n3 = affine 0 1 n1 -1 n2
//! n4 = mono 2 n3^2 n1
//! n5 = call relu2 n4
//! output n5
//! ```
//!
//! Node numbers are dense: the inputs are `n1..nd` and every definition must
//! introduce the next unused number. Inside a `deflib` block each branch arm
//! continues the numbering of the path that reaches it. `deflib <name>
//! <arity> unqualified {` registers a function that makes no qualification
//! claim; otherwise the sampled qualification check runs at registration.

use std::fmt;

use thiserror::Error;

use crate::graph::{BranchProgram, Instruction, NodeId, ProgramDef, Step};
use crate::library::{cq_sample_check, CqOutcome, LibraryFunction, LibraryRegistry};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    /// Run the sampled qualification check on `deflib` blocks.
    pub cq_check: bool,
    pub cq_samples: usize,
    pub cq_seed: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { cq_check: true, cq_samples: 1000, cq_seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ParsedProgram {
    pub program: ProgramDef,
    /// The base registry plus every `deflib` in the source.
    pub registry: LibraryRegistry,
}

#[derive(Clone, Debug)]
struct Token<'a> {
    text: &'a str,
    col: usize,
}

#[derive(Clone, Debug)]
struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    /// Column just past the last character, for end-of-line errors.
    end_col: usize,
}

fn tokenize(src: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start: Option<usize> = None;
        let mut col = 0;
        for (byte, ch) in body.char_indices() {
            col += 1;
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push((s, byte));
                }
            } else if start.is_none() {
                start = Some(byte);
            }
        }
        if let Some(s) = start {
            tokens.push((s, body.len()));
        }
        if tokens.is_empty() {
            continue;
        }
        let tokens = tokens
            .into_iter()
            .map(|(s, e)| Token { text: &body[s..e], col: body[..s].chars().count() + 1 })
            .collect();
        out.push(Line { number: i + 1, tokens, end_col: col + 1 });
    }
    out
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    registry: LibraryRegistry,
    options: ParseOptions,
}

fn err_at(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, col, message: message.into() }
}

impl<'a> Line<'a> {
    fn err(&self, idx: usize, message: impl Into<String>) -> ParseError {
        let col = self.tokens.get(idx).map_or(self.end_col, |t| t.col);
        err_at(self.number, col, message)
    }

    fn tok(&self, idx: usize, what: &str) -> Result<&Token<'a>, ParseError> {
        self.tokens.get(idx).ok_or_else(|| self.err(idx, format!("expected {what}")))
    }

    fn expect_end(&self, idx: usize) -> Result<(), ParseError> {
        match self.tokens.get(idx) {
            None => Ok(()),
            Some(t) => Err(self.err(idx, format!("unexpected {:?}", t.text))),
        }
    }

    fn node(&self, idx: usize) -> Result<NodeId, ParseError> {
        let t = self.tok(idx, "node reference")?;
        parse_node(t.text).ok_or_else(|| self.err(idx, format!("expected node like n3, got {:?}", t.text)))
    }

    fn number(&self, idx: usize) -> Result<f64, ParseError> {
        let t = self.tok(idx, "number")?;
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.err(idx, "constants must be finite")),
            Err(_) => Err(self.err(idx, format!("expected number, got {:?}", t.text))),
        }
    }

    fn count(&self, idx: usize, what: &str) -> Result<usize, ParseError> {
        let t = self.tok(idx, what)?;
        t.text
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| self.err(idx, format!("expected positive integer {what}, got {:?}", t.text)))
    }
}

fn parse_node(text: &str) -> Option<NodeId> {
    let digits = text.strip_prefix('n')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NodeId::from_dsl(digits.parse().ok()?)
}

fn is_name(text: &str) -> bool {
    let mut chars = text.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Line<'a>> {
        self.lines.get(self.pos)
    }

    fn eof_error(&self, message: &str) -> ParseError {
        let (line, col) = self.lines.last().map_or((1, 1), |l| (l.number, l.end_col));
        err_at(line, col, message)
    }

    /// `n<k> = <instruction>` with `k` the next dense node number.
    fn definition(
        &self,
        line: &Line<'a>,
        defined: usize,
        allow_calls: bool,
    ) -> Result<Instruction, ParseError> {
        let target = line.node(0)?;
        if target.0 != defined {
            return Err(line.err(
                0,
                format!("expected definition of {}, found {}", NodeId(defined), target),
            ));
        }
        match line.tokens.get(1) {
            Some(t) if t.text == "=" => {}
            _ => return Err(line.err(1, "expected '='")),
        }
        let op = line.tok(2, "instruction")?;
        let read = |idx: usize| -> Result<NodeId, ParseError> {
            let n = line.node(idx)?;
            if n.0 >= defined {
                return Err(line.err(
                    idx,
                    format!("{n} is not defined before {}", NodeId(defined)),
                ));
            }
            Ok(n)
        };
        match op.text {
            "affine" => {
                let constant = line.number(3)?;
                let mut terms = Vec::new();
                let mut i = 4;
                while i < line.tokens.len() {
                    let c = line.number(i)?;
                    let n = read(i + 1)?;
                    terms.push((c, n));
                    i += 2;
                }
                Ok(Instruction::Affine { constant, terms })
            }
            "mono" => {
                let coefficient = line.number(3)?;
                let mut factors = Vec::new();
                for i in 4..line.tokens.len() {
                    let text = line.tokens[i].text;
                    let (node_text, exp) = match text.split_once('^') {
                        Some((n, e)) => {
                            let e: u32 = e.parse().ok().filter(|&e| e > 0).ok_or_else(|| {
                                line.err(i, format!("exponent must be a positive integer in {text:?}"))
                            })?;
                            (n, e)
                        }
                        None => (text, 1),
                    };
                    let n = parse_node(node_text)
                        .ok_or_else(|| line.err(i, format!("expected factor like n2^3, got {text:?}")))?;
                    if n.0 >= defined {
                        return Err(line.err(i, format!("{n} is not defined before {}", NodeId(defined))));
                    }
                    factors.push((n, exp));
                }
                Ok(Instruction::Monomial { coefficient, factors })
            }
            "call" if allow_calls => {
                let name_tok = line.tok(3, "library function name")?;
                let g = self
                    .registry
                    .get(name_tok.text)
                    .ok_or_else(|| line.err(3, format!("unknown library function {:?}", name_tok.text)))?;
                let args = (4..line.tokens.len()).map(read).collect::<Result<Vec<_>, _>>()?;
                if args.len() != g.arity {
                    return Err(line.err(
                        3,
                        format!(
                            "arity mismatch: {} takes {} argument(s), got {}",
                            g.name,
                            g.arity,
                            args.len()
                        ),
                    ));
                }
                Ok(Instruction::LibCall { name: g.name.clone(), args })
            }
            "call" => Err(line.err(2, "library bodies cannot call other library functions")),
            other => Err(line.err(2, format!("unknown instruction {other:?}"))),
        }
    }

    /// Statements of one block up to (not including) its closing `}`.
    fn block(&mut self, defined: usize) -> Result<Step, ParseError> {
        let line = self.peek().cloned().ok_or_else(|| self.eof_error("unexpected end of input"))?;
        let head = line.tokens[0].text;
        match head {
            "return" => {
                let n = line.node(1)?;
                if n.0 >= defined {
                    return Err(line.err(1, format!("{n} is not defined")));
                }
                line.expect_end(2)?;
                self.pos += 1;
                Ok(Step::Return(n))
            }
            "branch" => {
                let test = line.node(1)?;
                if defined == 0 || test.0 != defined - 1 {
                    return Err(line.err(
                        1,
                        format!("branch must test the most recently computed node {}", NodeId(defined - 1)),
                    ));
                }
                match line.tokens.get(2) {
                    Some(t) if t.text == "{" => {}
                    _ => return Err(line.err(2, "expected '{'")),
                }
                line.expect_end(3)?;
                self.pos += 1;
                let then_step = self.block(defined)?;
                self.close_with_else()?;
                let else_step = self.block(defined)?;
                self.close_brace()?;
                if let Some(next) = self.peek() {
                    if next.tokens[0].text != "}" {
                        return Err(next.err(0, "statements after a branch are unreachable"));
                    }
                }
                Ok(Step::Branch {
                    test,
                    then_step: Box::new(then_step),
                    else_step: Box::new(else_step),
                })
            }
            "}" => Err(line.err(0, "block must end with return or branch")),
            _ => {
                let instr = self.definition(&line, defined, false)?;
                self.pos += 1;
                let next = self.block(defined + 1)?;
                Ok(Step::Compute { instr, next: Box::new(next) })
            }
        }
    }

    fn close_with_else(&mut self) -> Result<(), ParseError> {
        let line = self.peek().cloned().ok_or_else(|| self.eof_error("expected '} else {'"))?;
        let texts: Vec<&str> = line.tokens.iter().map(|t| t.text).collect();
        if texts != ["}", "else", "{"] {
            return Err(line.err(0, "expected '} else {'"));
        }
        self.pos += 1;
        Ok(())
    }

    fn close_brace(&mut self) -> Result<(), ParseError> {
        let line = self.peek().cloned().ok_or_else(|| self.eof_error("expected '}'"))?;
        if line.tokens[0].text != "}" {
            return Err(line.err(0, "expected '}'"));
        }
        line.expect_end(1)?;
        self.pos += 1;
        Ok(())
    }

    fn deflib(&mut self, line: &Line<'a>) -> Result<(), ParseError> {
        let name = line.tok(1, "library function name")?.text;
        if !is_name(name) {
            return Err(line.err(1, format!("invalid name {name:?}")));
        }
        if self.registry.contains(name) {
            return Err(line.err(1, format!("library function {name:?} is already defined")));
        }
        let arity = line.count(2, "arity")?;
        let mut idx = 3;
        let qualified = match line.tokens.get(idx) {
            Some(t) if t.text == "unqualified" => {
                idx += 1;
                false
            }
            _ => true,
        };
        match line.tokens.get(idx) {
            Some(t) if t.text == "{" => {}
            _ => return Err(line.err(idx, "expected '{'")),
        }
        line.expect_end(idx + 1)?;
        self.pos += 1;
        let body = self.block(arity)?;
        self.close_brace()?;
        let program = BranchProgram::new(arity, body).map_err(|e| line.err(0, e.to_string()))?;
        let g = LibraryFunction::new(name, program, qualified);
        if qualified && self.options.cq_check {
            let report = cq_sample_check(&g, self.options.cq_samples, self.options.cq_seed);
            if let CqOutcome::Fail(w) = report.outcome {
                return Err(line.err(
                    1,
                    format!("{name} violates constraint qualification: {w} (mark it 'unqualified' or disable the check)"),
                ));
            }
        }
        self.registry.register(g).map_err(|e| line.err(1, e.to_string()))
    }

    fn program(&mut self) -> Result<ProgramDef, ParseError> {
        let mut arity: Option<usize> = None;
        let mut instructions = Vec::new();
        let mut output: Option<NodeId> = None;
        while let Some(line) = self.peek().cloned() {
            let head = line.tokens[0].text;
            if output.is_some() {
                return Err(line.err(0, "nothing may follow the output line"));
            }
            match head {
                "deflib" => {
                    if arity.is_some() {
                        return Err(line.err(0, "deflib blocks must precede the inputs line"));
                    }
                    self.deflib(&line)?;
                }
                "inputs" => {
                    if arity.is_some() {
                        return Err(line.err(0, "duplicate inputs line"));
                    }
                    arity = Some(line.count(1, "input count")?);
                    line.expect_end(2)?;
                    self.pos += 1;
                }
                "output" => {
                    let d = arity.ok_or_else(|| line.err(0, "missing inputs line"))?;
                    let n = line.node(1)?;
                    if n.0 >= d + instructions.len() {
                        return Err(line.err(1, format!("output {n} is not defined")));
                    }
                    line.expect_end(2)?;
                    output = Some(n);
                    self.pos += 1;
                }
                _ => {
                    let d = arity.ok_or_else(|| line.err(0, "missing inputs line"))?;
                    let ins = self.definition(&line, d + instructions.len(), true)?;
                    instructions.push(ins);
                    self.pos += 1;
                }
            }
        }
        let d = arity.ok_or_else(|| self.eof_error("missing inputs line"))?;
        let output = output.ok_or_else(|| self.eof_error("missing output line"))?;
        Ok(ProgramDef::new(d, instructions, output))
    }
}

pub fn parse_program_with(
    src: &str,
    registry: &LibraryRegistry,
    options: &ParseOptions,
) -> Result<ParsedProgram, ParseError> {
    let mut p = Parser { lines: tokenize(src), pos: 0, registry: registry.clone(), options: *options };
    let program = p.program()?;
    Ok(ParsedProgram { program, registry: p.registry })
}

/// Parses with default options: registration-time qualification checks on.
pub fn parse_program(src: &str, registry: &LibraryRegistry) -> Result<ParsedProgram, ParseError> {
    parse_program_with(src, registry, &ParseOptions::default())
}

/// Renders a library body in `deflib` form.
pub struct DeflibText<'a>(pub &'a LibraryFunction);

impl fmt::Display for DeflibText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn step(f: &mut fmt::Formatter<'_>, s: &Step, defined: usize, indent: usize) -> fmt::Result {
            let pad = "  ".repeat(indent);
            match s {
                Step::Compute { instr, next } => {
                    writeln!(f, "{pad}{} = {instr}", NodeId(defined))?;
                    step(f, next, defined + 1, indent)
                }
                Step::Branch { test, then_step, else_step } => {
                    writeln!(f, "{pad}branch {test} {{")?;
                    step(f, then_step, defined, indent + 1)?;
                    writeln!(f, "{pad}}} else {{")?;
                    step(f, else_step, defined, indent + 1)?;
                    writeln!(f, "{pad}}}")
                }
                Step::Return(n) => writeln!(f, "{pad}return {n}"),
            }
        }
        let g = self.0;
        let flag = if g.claims_qualified { "" } else { " unqualified" };
        writeln!(f, "deflib {} {}{flag} {{", g.name, g.arity)?;
        step(f, g.program.body(), g.arity, 1)?;
        writeln!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{evaluate, CostMeter};
    use crate::library::builtin_registry;

    const F3: &str = "\
# f3 = 10 x - 9 (relu(x) - relu(-x))
inputs 1
n2 = call relu n1
n3 = affine 0 -1 n1
n4 = call relu n3
n5 = affine 0 10 n1 -9 n2 9 n4
output n5
";

    #[test]
    fn parses_f3() {
        let parsed = parse_program(F3, &builtin_registry()).unwrap();
        let p = &parsed.program;
        assert_eq!(p.input_arity, 1);
        assert_eq!(p.instructions.len(), 4);
        assert_eq!(p.output, NodeId(4));
        let mut m = CostMeter::new();
        let e = evaluate(p, &[2.0], &parsed.registry, &mut m).unwrap();
        assert_eq!(e.value, 2.0);
    }

    #[test]
    fn deflib_round_trip() {
        let src = "\
deflib bump 2 {
  n3 = affine 0 1 n1 -1 n2
  branch n3 {
    n4 = mono 1 n3^2
    return n4
  } else {
    return n2
  }
}
inputs 1
n2 = mono 1 n1^2
n3 = call bump n1 n2
output n3
";
        let parsed = parse_program(src, &builtin_registry()).unwrap();
        let g = parsed.registry.get("bump").unwrap();
        assert_eq!(g.program.branch_count(), 1);
        let text = DeflibText(g).to_string();
        let again = parse_program(&format!("{text}inputs 1\noutput n1\n"), &builtin_registry()).unwrap();
        assert_eq!(again.registry.get("bump").unwrap(), g);
    }

    fn error_of(src: &str) -> ParseError {
        parse_program(src, &builtin_registry()).unwrap_err()
    }

    #[test]
    fn errors_carry_positions() {
        let e = error_of("inputs 1\nn2 = affine 0 1 n3\noutput n2\n");
        assert_eq!((e.line, e.col), (2, 17));
        let e = error_of("inputs 1\nn2 = call max2 n1\noutput n2\n");
        assert_eq!(e.line, 2);
        assert!(e.message.contains("arity mismatch"));
        let e = error_of("inputs 1\nn3 = affine 1\noutput n3\n");
        assert!(e.message.contains("expected definition of n2"));
        let e = error_of("inputs 1\nn2 = frob n1\noutput n2\n");
        assert_eq!((e.line, e.col), (2, 6));
        let e = error_of("inputs 1\nn2 = affine 0 1 n1\n");
        assert!(e.message.contains("missing output"));
        let e = error_of("inputs 1\nn2 = mono 1 n1^0\noutput n2\n");
        assert!(e.message.contains("exponent"));
        let e = error_of("inputs 1\nn2 = affine nan\noutput n2\n");
        assert!(e.message.contains("finite"));
    }

    #[test]
    fn unqualified_deflib_needs_flag() {
        let body = "\
  n2 = mono 1 n1^3
  branch n2 {
    return n1
  } else {
    n3 = affine 0
    return n3
  }
}
inputs 1
n2 = call r n1
output n2
";
        let e = error_of(&format!("deflib r 1 {{\n{body}"));
        assert!(e.message.contains("constraint qualification"), "{e}");
        let ok = parse_program(&format!("deflib r 1 unqualified {{\n{body}"), &builtin_registry())
            .unwrap();
        assert!(!ok.registry.get("r").unwrap().claims_qualified);
        let opts = ParseOptions { cq_check: false, ..ParseOptions::default() };
        assert!(parse_program_with(&format!("deflib r 1 {{\n{body}"), &builtin_registry(), &opts)
            .is_ok());
    }

    #[test]
    fn branch_must_test_latest_node() {
        let e = error_of(
            "deflib g 2 {\n  n3 = affine 0 1 n1\n  branch n1 {\n    return n1\n  } else {\n    return n2\n  }\n}\ninputs 1\noutput n1\n",
        );
        assert_eq!(e.line, 3);
        assert!(e.message.contains("most recently computed"));
    }
}
