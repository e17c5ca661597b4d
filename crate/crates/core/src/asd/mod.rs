//! Automatic subdifferentiation.
//!
//! Every engine entry point runs one forward pass carrying [`Dual`]s and
//! recording local partials, resolves each library branch by the limiting
//! rule (`x_k > 0`, or `x_k = 0` and `ẋ_k ≥ 0`, selects the `+1` arm), and
//! finishes with reverse mode. Two variants differ only in tape granularity:
//!
//! * [`asd_program`] keeps each library call as one tape node whose partials
//!   are the call's own subgradient, computed by a private reverse pass.
//! * [`asd_program_flat`] splices the taken straight-line path of every call
//!   into one global tape and runs a single reverse pass.
//!
//! Both meter their work; [`CostReport`] compares it with the cost of
//! evaluating the function along the same branches.

mod direction;
mod tape;

use thiserror::Error;

pub use direction::{direction_for_seed, sample_direction, seeded_rng};
pub use tape::{reverse_mode, Tape, TapeError, TapeRecord};

use crate::graph::{
    affine_value, BranchTrace, CostMeter, EvalError, Instruction, NodeId, ProgramDef, Sign, Step,
};
use crate::graph::eval::{monomial_parts, read};
use crate::library::{LibraryFunction, LibraryRegistry};
use crate::scalar::Scalar;

/// A value with its one-sided directional derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<S> {
    pub a: S,
    pub d: S,
}

/// `[a, d, u]`: value, directional derivative and gradient of the limiting piece.
#[derive(Clone, Debug, PartialEq)]
pub struct AsdOutput<S> {
    pub a: S,
    pub d: S,
    pub u: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsdOptions {
    /// Treat `|x_k| <= kink_tol` as a tie. The default `0` compares exactly.
    pub kink_tol: f64,
}

impl Default for AsdOptions {
    fn default() -> Self {
        AsdOptions { kink_tol: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    /// Cost of evaluating `f` along the branches the engine took.
    pub runtime_f: u64,
    pub runtime_asd: u64,
    /// `runtime_asd / runtime_f`, with `0/0 = 1`.
    pub ratio: f64,
    pub f_meter: CostMeter,
    pub asd_meter: CostMeter,
}

impl CostReport {
    pub fn new(f_meter: CostMeter, asd_meter: CostMeter) -> Self {
        let runtime_f = f_meter.total();
        let runtime_asd = asd_meter.total();
        let ratio = if runtime_asd == 0 && runtime_f == 0 {
            1.0
        } else {
            runtime_asd as f64 / runtime_f as f64
        };
        CostReport { runtime_f, runtime_asd, ratio, f_meter, asd_meter }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AsdError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("direction has {found} component(s), expected {expected}")]
    DirectionArity { expected: usize, found: usize },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Full result of a program-level run.
#[derive(Clone, Debug, PartialEq)]
pub struct AsdResult<S> {
    pub value: S,
    pub derivative: S,
    pub gradient: Vec<S>,
    pub cost: CostReport,
    /// Branch word of every library call, in program order.
    pub traces: Vec<BranchTrace>,
    /// Number of branch tests that were exact ties (`x_k = 0`).
    pub ties: usize,
}

/// Which tape granularity a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Nested,
    Flat,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Nested => "nested",
            Variant::Flat => "flat",
        }
    }
}

#[derive(Default)]
struct Meters {
    asd: CostMeter,
    f: CostMeter,
    ties: usize,
}

/// Value and local partials of a smooth instruction. The value's cost is
/// charged to both meters; the partials only to the engine's.
fn smooth_with_partials<S: Scalar>(
    ins: &Instruction,
    vals: &[S],
    at: NodeId,
    meters: &mut Meters,
) -> Result<(S, Vec<(NodeId, S)>), EvalError> {
    let mut vm = CostMeter::new();
    let out = match ins {
        Instruction::Affine { constant, terms } => {
            let value = affine_value(*constant, terms, vals, at, &mut vm)?;
            let partials = terms.iter().map(|&(c, n)| (n, S::from_f64(c))).collect();
            (value, partials)
        }
        Instruction::Monomial { coefficient, factors } => {
            let parts = monomial_parts(*coefficient, factors, vals, at, &mut vm)?;
            let n = factors.len();
            let c = S::from_f64(*coefficient);
            let m = &mut meters.asd;
            // suffix[j] = y_j ⋯ y_{n-1}
            let mut suffix: Vec<Option<S>> = vec![None; n + 1];
            if n >= 2 {
                suffix[n - 1] = Some(parts.powers[n - 1].clone());
                for j in (1..n - 1).rev() {
                    let s = parts.powers[j].clone() * suffix[j + 1].clone().expect("suffix set");
                    m.mul(1);
                    suffix[j] = Some(s);
                }
            }
            let mut partials = Vec::with_capacity(n);
            for (j, &(node, e)) in factors.iter().enumerate() {
                let excl = if n == 1 {
                    c.clone()
                } else if j == 0 {
                    m.mul(1);
                    c.clone() * suffix[1].clone().expect("suffix set")
                } else if j == n - 1 {
                    parts.prefix[n - 2].clone()
                } else {
                    m.mul(1);
                    parts.prefix[j - 1].clone() * suffix[j + 1].clone().expect("suffix set")
                };
                let p = if e > 1 {
                    let lower = parts.lower_powers[j].clone().expect("power above one keeps x^(e-1)");
                    m.mul(2);
                    excl * (S::from_f64(e as f64) * lower)
                } else {
                    excl
                };
                partials.push((node, p));
            }
            (parts.value, partials)
        }
        Instruction::LibCall { name, .. } => return Err(EvalError::UnknownLibrary(name.clone())),
    };
    meters.asd += vm;
    meters.f += vm;
    Ok(out)
}

/// `Σ ∂x_k/∂x_j · ẋ_j`, one multiplication and one addition per partial.
fn tangent<S: Scalar>(partials: &[(NodeId, S)], dots: &[S], meter: &mut CostMeter) -> S {
    let mut acc: Option<S> = None;
    for (n, p) in partials {
        let t = p.clone() * dots[n.0].clone();
        meter.mul(1);
        meter.add(1);
        acc = Some(match acc {
            Some(a) => a + t,
            None => t,
        });
    }
    acc.unwrap_or_else(S::zero)
}

/// Arm chosen at a test. With a direction this is the limiting rule;
/// without one it is plain `sign(0) = +1` evaluation.
fn choose<S: Scalar>(a: &S, d: Option<&S>, opts: &AsdOptions, meters: &mut Meters) -> Sign {
    meters.asd.test(1);
    meters.f.test(1);
    let Some(d) = d else {
        return Sign::of(a);
    };
    let tie = a.abs_val() <= S::from_f64(opts.kink_tol.abs());
    if tie {
        meters.asd.test(1);
        meters.ties += 1;
        Sign::of(d)
    } else {
        Sign::of(a)
    }
}

/// The straight-line path a library call took.
struct LibraryPath<S> {
    values: Vec<S>,
    dots: Vec<S>,
    /// Local partials of each computed node, indexed from `arity`.
    partials: Vec<Vec<(NodeId, S)>>,
    output: NodeId,
    trace: BranchTrace,
}

fn run_path<S: Scalar>(
    g: &LibraryFunction,
    x: &[S],
    v: Option<&[S]>,
    opts: &AsdOptions,
    meters: &mut Meters,
) -> Result<LibraryPath<S>, EvalError> {
    if x.len() != g.arity {
        return Err(EvalError::CallArity { name: g.name.clone(), expected: g.arity, found: x.len() });
    }
    let mut values = x.to_vec();
    let mut dots: Vec<S> = match v {
        Some(v) => v.to_vec(),
        None => Vec::new(),
    };
    let mut partials = Vec::new();
    let mut trace = BranchTrace::default();
    let mut step = g.program.body();
    loop {
        match step {
            Step::Compute { instr, next } => {
                let at = NodeId(values.len());
                let (val, ps) = smooth_with_partials(instr, &values, at, meters)?;
                if v.is_some() {
                    let dot = tangent(&ps, &dots, &mut meters.asd);
                    dots.push(dot);
                }
                values.push(val);
                partials.push(ps);
                step = next;
            }
            Step::Branch { test, then_step, else_step } => {
                let at = NodeId(values.len());
                let a = read(&values, *test, at)?;
                let d = if v.is_some() { Some(read(&dots, *test, at)?) } else { None };
                let s = choose(&a, d.as_ref(), opts, meters);
                trace.push(s);
                step = if s == Sign::Pos { then_step } else { else_step };
            }
            Step::Return(n) => {
                read(&values, *n, NodeId(values.len()))?;
                return Ok(LibraryPath { values, dots, partials, output: *n, trace });
            }
        }
    }
}

fn path_tape<S: Scalar>(path: &LibraryPath<S>, arity: usize) -> Tape<S> {
    let mut tape = Tape::new(&path.values[..arity]);
    for (i, ps) in path.partials.iter().enumerate() {
        tape.push(
            path.values[arity + i].clone(),
            ps.iter().map(|(n, p)| (n.0, p.clone())).collect(),
        );
    }
    tape.set_output(path.output.0);
    tape
}

/// Result of one overloaded library call.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryRun<S> {
    pub output: AsdOutput<S>,
    /// Tape of the straight-line path taken.
    pub tape: Tape<S>,
    pub trace: BranchTrace,
    pub cost: CostReport,
    /// Number of branch tests that were ties.
    pub ties: usize,
}

/// The overloaded library subroutine: forward duals through the branching
/// program with the limiting tie rule, then reverse mode over the path taken.
pub fn asd_library<S: Scalar>(
    g: &LibraryFunction,
    x: &[S],
    v: &[S],
    opts: &AsdOptions,
) -> Result<LibraryRun<S>, AsdError> {
    if v.len() != g.arity {
        return Err(AsdError::DirectionArity { expected: g.arity, found: v.len() });
    }
    let mut meters = Meters::default();
    let path = run_path(g, x, Some(v), opts, &mut meters)?;
    let tape = path_tape(&path, g.arity);
    let u = reverse_mode(&tape, &mut meters.asd)?;
    let output = AsdOutput {
        a: path.values[path.output.0].clone(),
        d: path.dots[path.output.0].clone(),
        u,
    };
    Ok(LibraryRun {
        output,
        tape,
        trace: path.trace,
        cost: CostReport::new(meters.f, meters.asd),
        ties: meters.ties,
    })
}

fn check_dims<S>(prog: &ProgramDef, x: &[S], v: Option<&[S]>) -> Result<(), AsdError> {
    if x.len() != prog.input_arity {
        return Err(EvalError::InputArity { expected: prog.input_arity, found: x.len() }.into());
    }
    if let Some(v) = v {
        if v.len() != prog.input_arity {
            return Err(AsdError::DirectionArity { expected: prog.input_arity, found: v.len() });
        }
    }
    Ok(())
}

fn lookup<'a>(
    lib: &'a LibraryRegistry,
    name: &str,
    nargs: usize,
) -> Result<&'a LibraryFunction, EvalError> {
    let g = lib.get(name).ok_or_else(|| EvalError::UnknownLibrary(name.to_string()))?;
    if g.arity != nargs {
        return Err(EvalError::CallArity { name: name.to_string(), expected: g.arity, found: nargs });
    }
    Ok(g)
}

/// Nested variant: library calls are single tape nodes carrying their own
/// subgradient as local partials.
pub fn asd_program<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    v: &[S],
    lib: &LibraryRegistry,
    opts: &AsdOptions,
) -> Result<AsdResult<S>, AsdError> {
    check_dims(prog, x, Some(v))?;
    let mut meters = Meters::default();
    let mut values = x.to_vec();
    let mut dots = v.to_vec();
    let mut tape = Tape::new(x);
    let mut traces = Vec::new();
    for ins in &prog.instructions {
        let at = NodeId(values.len());
        let (val, dot, parents) = match ins {
            Instruction::LibCall { name, args } => {
                let g = lookup(lib, name, args.len())?;
                let xa = args.iter().map(|&a| read(&values, a, at)).collect::<Result<Vec<_>, _>>()?;
                let va = args.iter().map(|&a| read(&dots, a, at)).collect::<Result<Vec<_>, _>>()?;
                let path = run_path(g, &xa, Some(&va), opts, &mut meters)?;
                let local = path_tape(&path, g.arity);
                let u = reverse_mode(&local, &mut meters.asd)?;
                traces.push(path.trace);
                let parents: Vec<(usize, S)> = args.iter().map(|a| a.0).zip(u).collect();
                (path.values[path.output.0].clone(), path.dots[path.output.0].clone(), parents)
            }
            _ => {
                let (val, ps) = smooth_with_partials(ins, &values, at, &mut meters)?;
                let dot = tangent(&ps, &dots, &mut meters.asd);
                (val, dot, ps.into_iter().map(|(n, p)| (n.0, p)).collect())
            }
        };
        tape.push(val.clone(), parents);
        values.push(val);
        dots.push(dot);
    }
    let out = prog.output;
    let value = values.get(out.0).cloned().ok_or(EvalError::UndefinedOutput(out))?;
    tape.set_output(out.0);
    let gradient = reverse_mode(&tape, &mut meters.asd)?;
    Ok(AsdResult {
        value,
        derivative: dots[out.0].clone(),
        gradient,
        cost: CostReport::new(meters.f, meters.asd),
        traces,
        ties: meters.ties,
    })
}

struct FlatRun<S> {
    value: S,
    derivative: Option<S>,
    tape: Tape<S>,
    traces: Vec<BranchTrace>,
}

/// Forward pass building the spliced global tape. Without a direction no
/// tangents are propagated and branches follow plain evaluation.
fn flat_forward<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    v: Option<&[S]>,
    lib: &LibraryRegistry,
    opts: &AsdOptions,
    meters: &mut Meters,
) -> Result<FlatRun<S>, AsdError> {
    check_dims(prog, x, v)?;
    let with_dir = v.is_some();
    let mut values = x.to_vec();
    let mut dots: Vec<S> = v.map(<[S]>::to_vec).unwrap_or_default();
    // program node → tape record
    let mut slot: Vec<usize> = (0..x.len()).collect();
    let mut tape = Tape::new(x);
    let mut traces = Vec::new();
    for ins in &prog.instructions {
        let at = NodeId(values.len());
        match ins {
            Instruction::LibCall { name, args } => {
                let g = lookup(lib, name, args.len())?;
                let xa = args.iter().map(|&a| read(&values, a, at)).collect::<Result<Vec<_>, _>>()?;
                let va = if with_dir {
                    Some(args.iter().map(|&a| read(&dots, a, at)).collect::<Result<Vec<_>, _>>()?)
                } else {
                    None
                };
                let path = run_path(g, &xa, va.as_deref(), opts, meters)?;
                let mut local: Vec<usize> = args.iter().map(|a| slot[a.0]).collect();
                for (i, ps) in path.partials.iter().enumerate() {
                    let parents = ps.iter().map(|(n, p)| (local[n.0], p.clone())).collect();
                    local.push(tape.push(path.values[g.arity + i].clone(), parents));
                }
                slot.push(local[path.output.0]);
                values.push(path.values[path.output.0].clone());
                if with_dir {
                    dots.push(path.dots[path.output.0].clone());
                }
                traces.push(path.trace);
            }
            _ => {
                let (val, ps) = smooth_with_partials(ins, &values, at, meters)?;
                if with_dir {
                    let dot = tangent(&ps, &dots, &mut meters.asd);
                    dots.push(dot);
                }
                let parents = ps.into_iter().map(|(n, p)| (slot[n.0], p)).collect();
                slot.push(tape.push(val.clone(), parents));
                values.push(val);
            }
        }
    }
    let out = prog.output;
    let value = values.get(out.0).cloned().ok_or(EvalError::UndefinedOutput(out))?;
    tape.set_output(slot[out.0]);
    let derivative = if with_dir { Some(dots[out.0].clone()) } else { None };
    Ok(FlatRun { value, derivative, tape, traces })
}

/// Flattened variant: one global tape of primitive nodes, one reverse pass.
pub fn asd_program_flat<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    v: &[S],
    lib: &LibraryRegistry,
    opts: &AsdOptions,
) -> Result<AsdResult<S>, AsdError> {
    let mut meters = Meters::default();
    let run = flat_forward(prog, x, Some(v), lib, opts, &mut meters)?;
    let gradient = reverse_mode(&run.tape, &mut meters.asd)?;
    Ok(AsdResult {
        value: run.value,
        derivative: run.derivative.expect("direction given"),
        gradient,
        cost: CostReport::new(meters.f, meters.asd),
        traces: run.traces,
        ties: meters.ties,
    })
}

/// Runs the chosen variant.
pub fn asd_run<S: Scalar>(
    variant: Variant,
    prog: &ProgramDef,
    x: &[S],
    v: &[S],
    lib: &LibraryRegistry,
    opts: &AsdOptions,
) -> Result<AsdResult<S>, AsdError> {
    match variant {
        Variant::Nested => asd_program(prog, x, v, lib, opts),
        Variant::Flat => asd_program_flat(prog, x, v, lib, opts),
    }
}

/// Plain reverse mode: `sign(0) = +1` evaluation, local partials, one reverse
/// pass over the spliced tape. Exact for smooth programs and at points where
/// no branch test is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ReverseResult<S> {
    pub value: S,
    pub gradient: Vec<S>,
    pub tape: Tape<S>,
    pub cost: CostReport,
    pub traces: Vec<BranchTrace>,
}

pub fn reverse_gradient<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    lib: &LibraryRegistry,
) -> Result<ReverseResult<S>, AsdError> {
    let mut meters = Meters::default();
    let run = flat_forward(prog, x, None, lib, &AsdOptions::default(), &mut meters)?;
    let gradient = reverse_mode(&run.tape, &mut meters.asd)?;
    Ok(ReverseResult {
        value: run.value,
        gradient,
        tape: run.tape,
        cost: CostReport::new(meters.f, meters.asd),
        traces: run.traces,
    })
}

/// A seeded subgradient query.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgradient {
    pub seed: u64,
    pub direction: Vec<f64>,
    pub value: f64,
    pub derivative: f64,
    pub gradient: Vec<f64>,
    pub cost: CostReport,
    pub traces: Vec<BranchTrace>,
}

/// Samples a direction from `seed` and runs the flattened engine along it.
pub fn subgradient(
    prog: &ProgramDef,
    x: &[f64],
    seed: u64,
    lib: &LibraryRegistry,
    opts: &AsdOptions,
) -> Result<Subgradient, AsdError> {
    let direction = direction_for_seed(prog.input_arity.max(1), seed);
    let r = asd_program_flat(prog, x, &direction, lib, opts)?;
    Ok(Subgradient {
        seed,
        direction,
        value: r.value,
        derivative: r.derivative,
        gradient: r.gradient,
        cost: r.cost,
        traces: r.traces,
    })
}

/// Reruns [`subgradient`] over several seeds and reports whether the
/// gradients agree. Disagreement is reported, not adjudicated.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossCheck {
    pub runs: Vec<Subgradient>,
    /// Largest componentwise difference from the first run's gradient.
    pub spread: f64,
}

impl CrossCheck {
    pub fn agrees(&self, tol: f64) -> bool {
        self.spread <= tol
    }
}

pub fn cross_check(
    prog: &ProgramDef,
    x: &[f64],
    seeds: &[u64],
    lib: &LibraryRegistry,
    opts: &AsdOptions,
) -> Result<CrossCheck, AsdError> {
    let runs = seeds
        .iter()
        .map(|&s| subgradient(prog, x, s, lib, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let spread = match runs.first() {
        None => 0.0,
        Some(first) => runs
            .iter()
            .flat_map(|r| r.gradient.iter().zip(&first.gradient).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max),
    };
    Ok(CrossCheck { runs, spread })
}
