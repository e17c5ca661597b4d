#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use subgrad_core::corpus::{load_corpus, CorpusEntry};
use subgrad_core::dsl::ParseOptions;
use subgrad_core::graph::{BranchProgram, Instruction, NodeId, ProgramBuilder, ProgramDef, Step};
use subgrad_core::library::{builtin_registry, LibraryFunction, LibraryRegistry};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus() -> Vec<CorpusEntry> {
    load_corpus(&corpus_dir(), &builtin_registry(), &ParseOptions::default()).expect("corpus loads")
}

pub fn entry<'a>(corpus: &'a [CorpusEntry], name: &str) -> &'a CorpusEntry {
    corpus.iter().find(|e| e.name == name).unwrap_or_else(|| panic!("no corpus program {name}"))
}

/// `k / 2^bits` with `|k / 2^bits| <= bound`.
pub fn dyadic(rng: &mut ChaCha8Rng, bound: i64, bits: u32) -> f64 {
    let scale = 1i64 << bits;
    rng.random_range(-bound * scale..=bound * scale) as f64 / scale as f64
}

pub fn dyadic_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| dyadic(rng, 2, 3)).collect()
}

/// Nonzero dyadic coefficient in `[-2, 2]` with denominator 4.
fn coefficient(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let c = dyadic(rng, 2, 2);
        if c != 0.0 {
            return c;
        }
    }
}

const UNARY: [&str; 5] = ["relu", "abs", "clip", "hinge_sq", "ramp_sq"];
const BINARY: [&str; 2] = ["max2", "min2"];

/// Random valid program over the builtins with dyadic constants. Constants
/// are zero with probability one half so that the origin is often a kink.
pub fn random_program(rng: &mut ChaCha8Rng, d: usize, nodes: usize) -> ProgramDef {
    let mut b = ProgramBuilder::new(d);
    let mut last = b.input(d - 1);
    let zero_constants = rng.random_bool(0.5);
    for _ in 0..nodes {
        let avail = last.0 + 1;
        let pick = |rng: &mut ChaCha8Rng| NodeId(rng.random_range(0..avail));
        last = match rng.random_range(0..10) {
            0..=2 => {
                let k = rng.random_range(1..=3);
                let terms: Vec<(f64, NodeId)> = (0..k).map(|_| (coefficient(rng), pick(rng))).collect();
                let c = if zero_constants { 0.0 } else { dyadic(rng, 1, 2) };
                b.affine(c, &terms)
            }
            3..=4 => {
                let k = rng.random_range(1..=2);
                let factors: Vec<(NodeId, u32)> =
                    (0..k).map(|_| (pick(rng), rng.random_range(1..=2))).collect();
                b.mono(coefficient(rng), &factors)
            }
            5..=7 => {
                let name = UNARY[rng.random_range(0..UNARY.len())];
                let arg = if rng.random_bool(0.6) { last } else { pick(rng) };
                b.call(name, &[arg])
            }
            _ => {
                let name = BINARY[rng.random_range(0..BINARY.len())];
                b.call(name, &[last, pick(rng)])
            }
        };
    }
    b.finish(last)
}

/// `max` (or `min`) of `m` arguments as a tournament of affine tests.
pub fn extremum_library(name: &str, m: usize, max: bool) -> LibraryFunction {
    fn tour(best: usize, j: usize, m: usize, next: usize, max: bool) -> Step {
        if j == m {
            return Step::ret(best);
        }
        let s = if max { 1.0 } else { -1.0 };
        Step::compute(
            Instruction::affine(0.0, &[(s, best), (-s, j)]),
            Step::branch(next, tour(best, j + 1, m, next + 1, max), tour(j, j + 1, m, next + 1, max)),
        )
    }
    let bp = BranchProgram::new(m, tour(0, 1, m, m, max)).expect("tournament is well formed");
    LibraryFunction::new(name, bp, true)
}

/// Builtins plus `max3`, `min3`, `max4`, `min4`.
pub fn composition_registry() -> LibraryRegistry {
    let mut lib = builtin_registry();
    for m in [3, 4] {
        lib.register(extremum_library(&format!("max{m}"), m, true)).unwrap();
        lib.register(extremum_library(&format!("min{m}"), m, false)).unwrap();
    }
    lib
}

/// `f = h(g_1, ..., g_m)` with the node of every `g_i` recorded.
pub struct Composition {
    pub program: ProgramDef,
    pub outer: String,
    pub inner: Vec<NodeId>,
}

impl Composition {
    /// The program computing only `g_i`.
    pub fn inner_program(&self, i: usize) -> ProgramDef {
        let node = self.inner[i];
        let d = self.program.input_arity;
        ProgramDef::new(d, self.program.instructions[..node.0 + 1 - d].to_vec(), node)
    }
}

fn inner_poly(b: &mut ProgramBuilder, rng: &mut ChaCha8Rng, d: usize, zero_constants: bool) -> NodeId {
    let x = |rng: &mut ChaCha8Rng| NodeId(rng.random_range(0..d));
    let k = rng.random_range(1..=2);
    let factors: Vec<(NodeId, u32)> = (0..k).map(|_| (x(rng), rng.random_range(1..=2))).collect();
    let m = b.mono(coefficient(rng), &factors);
    let c = if zero_constants { 0.0 } else { dyadic(rng, 1, 2) };
    let lin = x(rng);
    b.affine(c, &[(1.0, m), (coefficient(rng), lin)])
}

/// Random composition with `m <= 4` inner maps and nesting depth at most 3:
/// each inner map is a polynomial, a library call of one, or a library call
/// of a shifted library call.
pub fn random_composition(rng: &mut ChaCha8Rng, d: usize) -> Composition {
    let m = rng.random_range(1..=4);
    let zero_constants = rng.random_bool(0.5);
    let mut b = ProgramBuilder::new(d);
    let mut inner = Vec::with_capacity(m);
    for _ in 0..m {
        let p = inner_poly(&mut b, rng, d, zero_constants);
        let depth = rng.random_range(0..3);
        let mut node = p;
        for level in 0..depth {
            let name = UNARY[rng.random_range(0..UNARY.len())];
            node = b.call(name, &[node]);
            if level + 1 < depth {
                let c = if zero_constants { 0.0 } else { dyadic(rng, 1, 2) };
                node = b.affine(c, &[(coefficient(rng), node)]);
            }
        }
        inner.push(node);
    }
    let outer = match m {
        1 => UNARY[rng.random_range(0..UNARY.len())].to_string(),
        2 => BINARY[rng.random_range(0..BINARY.len())].to_string(),
        _ => format!("{}{m}", if rng.random_bool(0.5) { "max" } else { "min" }),
    };
    let out = b.call(&outer, &inner);
    Composition { program: b.finish(out), outer, inner }
}
