use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::BigRational;
use rayon::prelude::*;

use subgrad_core::asd::{
    asd_program_flat, asd_run, cross_check, direction_for_seed, reverse_gradient, AsdError, AsdOptions, Variant,
};
use subgrad_core::corpus::{load_corpus, parse_vector, CorpusEntry, CorpusError, PointsError};
use subgrad_core::dsl::{parse_program_with, ParseOptions, ParsedProgram};
use subgrad_core::graph::{EvalError, ExtractionError, ExtractionLimits, PieceDescription, Sign};
use subgrad_core::library::{builtin_registry, cq_diagnostic_pieces, CqOutcome};
use subgrad_core::oracle::{
    naive_ad, run_check, CheckEngine, CheckOptions, HullOptions, NaiveConvention, OracleError, ProgramPieces,
};
use subgrad_core::scalar::{parse_rational, to_floats};

use crate::report::{
    trace_signs, BenchReport, BenchRow, Bounds, CheckReport, CheckRowReport, ConstraintReport, Cost,
    CrossCheckReport, NaiveReport, PieceReport, PiecesReport, Report, RunReport, SelectionReport, Violation,
};
use crate::{
    BenchArgs, BenchVariant, CheckArgs, DirectionArgs, EngineArg, Failure, NaiveArgs, PiecesArgs, ProgramArgs,
    RunArgs, VariantArg,
};

pub const FLAT_BOUND: f64 = 6.0;
pub const NESTED_BOUND: f64 = 10.0;
pub const REVERSE_BOUND: f64 = 5.0;

/// Text for stdout, the exit code, and an optional message for stderr.
pub struct Done {
    pub out: String,
    pub code: u8,
    pub note: Option<String>,
}

impl Done {
    fn ok(out: String) -> Self {
        Done { out, code: 0, note: None }
    }
}

type Outcome = Result<Done, Failure>;

fn json(report: Report) -> String {
    let mut s = serde_json::to_string_pretty(&report).expect("reports serialize");
    s.push('\n');
    s
}

fn vec_str(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn words_str(words: &[Vec<i8>]) -> String {
    let calls: Vec<String> = words
        .iter()
        .map(|w| w.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect())
        .collect();
    format!("[{}]", calls.join(" "))
}

fn load(args: &ProgramArgs) -> Result<ParsedProgram, Failure> {
    let path = &args.program;
    let src = fs::read_to_string(path)
        .map_err(|e| Failure::new(Failure::OTHER, format!("{}: {e}", path.display())))?;
    let opts = ParseOptions { cq_check: !args.no_cq_check, ..ParseOptions::default() };
    parse_program_with(&src, &builtin_registry(), &opts).map_err(|e| {
        Failure::new(Failure::PARSE, format!("{}:{}:{}: {}", path.display(), e.line, e.col, e.message))
    })
}

fn vector(flag: &str, text: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let v = parse_vector(text).map_err(|m| Failure::new(Failure::OTHER, format!("--{flag}: {m}")))?;
    if v.len() != dim {
        return Err(Failure::new(
            Failure::DIMENSION,
            format!("--{flag} has {} component(s), the program takes {dim}", v.len()),
        ));
    }
    Ok(v)
}

/// The explicit direction, or the one sampled from the seed.
fn direction(args: &DirectionArgs, dim: usize) -> Result<(Vec<f64>, Option<u64>), Failure> {
    match &args.dir {
        Some(text) => Ok((vector("dir", text, dim)?, None)),
        None => Ok((direction_for_seed(dim.max(1), args.seed), Some(args.seed))),
    }
}

fn asd_failure(e: AsdError) -> Failure {
    let code = match e {
        AsdError::DirectionArity { .. } | AsdError::Eval(EvalError::InputArity { .. }) => Failure::DIMENSION,
        _ => Failure::OTHER,
    };
    Failure::new(code, e.to_string())
}

fn oracle_failure(e: OracleError) -> Failure {
    let code = match e {
        OracleError::Dimension { .. } => Failure::DIMENSION,
        OracleError::Extraction(_) => Failure::EXTRACTION,
        OracleError::Asd(e) => return asd_failure(e),
        OracleError::Eval(EvalError::InputArity { .. }) => Failure::DIMENSION,
        _ => Failure::OTHER,
    };
    Failure::new(code, e.to_string())
}

fn program_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn run(a: &RunArgs) -> Outcome {
    let parsed = load(&a.program)?;
    let d = parsed.program.input_arity;
    let x = vector("at", &a.at, d)?;
    let (v, seed) = direction(&a.direction, d)?;
    if !(a.kink_tol >= 0.0 && a.kink_tol.is_finite()) {
        return Err(Failure::new(Failure::OTHER, "--kink-tol must be finite and non-negative"));
    }
    let opts = AsdOptions { kink_tol: a.kink_tol };
    let variant = match a.variant {
        VariantArg::Nested => Variant::Nested,
        VariantArg::Flat => Variant::Flat,
    };
    let r = asd_run(variant, &parsed.program, &x, &v, &parsed.registry, &opts).map_err(asd_failure)?;
    let cross = match a.cross_check {
        None => None,
        Some(k) => {
            let base = a.direction.seed;
            let seeds: Vec<u64> = (0..k as u64).map(|i| base.wrapping_add(i)).collect();
            let cc = cross_check(&parsed.program, &x, &seeds, &parsed.registry, &opts).map_err(asd_failure)?;
            Some(CrossCheckReport {
                seeds,
                gradients: cc.runs.iter().map(|s| s.gradient.clone()).collect(),
                spread: cc.spread,
                agrees: cc.agrees(0.0),
            })
        }
    };
    let report = RunReport {
        program: program_name(&a.program.program),
        variant: variant.name().to_string(),
        x,
        seed,
        direction: v,
        value: r.value,
        derivative: r.derivative,
        gradient: r.gradient,
        cost: Cost::from(&r.cost),
        traces: trace_signs(&r.traces),
        ties: r.ties,
        cross_check: cross,
    };
    if a.program.json {
        return Ok(Done::ok(json(Report::Run(report))));
    }
    let mut out = String::new();
    let r = &report;
    let _ = writeln!(out, "program     {}", r.program);
    let _ = writeln!(out, "variant     {}", r.variant);
    let _ = writeln!(out, "x           {}", vec_str(&r.x));
    match r.seed {
        Some(s) => {
            let _ = writeln!(out, "direction   {} (seed {s})", vec_str(&r.direction));
        }
        None => {
            let _ = writeln!(out, "direction   {}", vec_str(&r.direction));
        }
    }
    let _ = writeln!(out, "value       {}", r.value);
    let _ = writeln!(out, "derivative  {}", r.derivative);
    let _ = writeln!(out, "subgradient {}", vec_str(&r.gradient));
    let _ = writeln!(
        out,
        "cost        runtime_f={} runtime_asd={} ratio={:.4}",
        r.cost.runtime_f, r.cost.runtime_asd, r.cost.ratio
    );
    let _ = writeln!(out, "branches    {} ({} tie(s))", words_str(&r.traces), r.ties);
    if let Some(cc) = &r.cross_check {
        let verdict = if cc.agrees { "agree" } else { "DISAGREE" };
        let _ = writeln!(out, "cross-check {} seeds: {verdict}, spread {}", cc.seeds.len(), cc.spread);
        for (s, g) in cc.seeds.iter().zip(&cc.gradients) {
            let _ = writeln!(out, "  seed {s}: {}", vec_str(g));
        }
    }
    Ok(Done::ok(out))
}

pub fn check(a: &CheckArgs) -> Outcome {
    let parsed = load(&a.program)?;
    let d = parsed.program.input_arity;
    let x = vector("at", &a.at, d)?;
    let (v, seed) = direction(&a.direction, d)?;
    let engine = match a.engine {
        EngineArg::AsdFlat => CheckEngine::AsdFlat,
        EngineArg::AsdNested => CheckEngine::AsdNested,
        EngineArg::Naive => CheckEngine::Naive,
    };
    let opts = CheckOptions {
        hull: HullOptions { n_dirs: a.dirs, tol: a.tol, seed: a.direction.seed, ..HullOptions::default() },
        naive: NaiveConvention::with_relu_zero(a.relu_zero),
        ..CheckOptions::default()
    };
    let r = run_check(&parsed.program, &x, &v, &parsed.registry, engine, &opts).map_err(oracle_failure)?;
    let rows: Vec<CheckRowReport> = r
        .rows
        .iter()
        .map(|row| CheckRowReport {
            oracle: row.oracle.to_string(),
            status: row.status.name().to_string(),
            expected: row.expected.clone(),
            found: row.found.clone(),
            measure: row.measure,
            detail: row.detail.clone(),
        })
        .collect();
    let report = CheckReport {
        program: program_name(&a.program.program),
        engine: engine.name().to_string(),
        x,
        seed,
        direction: v,
        value: r.output.value,
        derivative: r.output.derivative,
        gradient: r.output.gradient.clone(),
        hull_directions: a.dirs,
        tol: a.tol,
        passed: r.passed(),
        rows,
    };
    let failures: Vec<String> = report
        .rows
        .iter()
        .filter(|row| row.status == "fail")
        .map(|row| {
            let expected = if row.expected.is_empty() { String::new() } else { format!("expected {} ", vec_str(&row.expected)) };
            format!("{} failed: {expected}found {} ({})", row.oracle, vec_str(&row.found), row.detail)
        })
        .collect();
    let code = if report.passed { 0 } else { Failure::ORACLE };
    let note = if failures.is_empty() { None } else { Some(failures.join("\n")) };
    if a.program.json {
        return Ok(Done { out: json(Report::Check(report)), code, note });
    }
    let mut out = String::new();
    let r = &report;
    let _ = writeln!(out, "program     {}", r.program);
    let _ = writeln!(out, "engine      {}", r.engine);
    let _ = writeln!(out, "x           {}", vec_str(&r.x));
    let _ = writeln!(out, "direction   {}", vec_str(&r.direction));
    let _ = writeln!(out, "value       {}", r.value);
    let _ = writeln!(out, "derivative  {}", r.derivative);
    let _ = writeln!(out, "subgradient {}", vec_str(&r.gradient));
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<15} {:<13} {:>10}  detail", "oracle", "status", "measure");
    for row in &r.rows {
        let measure = row.measure.map_or("-".to_string(), |m| format!("{m:.3e}"));
        let _ = writeln!(out, "{:<15} {:<13} {:>10}  {}", row.oracle, row.status, measure, row.detail);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", if r.passed { "all checks passed" } else { "CHECK FAILED" });
    Ok(Done { out, code, note })
}

fn corpus_failure(e: CorpusError) -> Failure {
    let code = match &e {
        CorpusError::Io { .. } => Failure::OTHER,
        CorpusError::Parse { path, source } => {
            let msg = format!("{}:{}:{}: {}", path.display(), source.line, source.col, source.message);
            return Failure::new(Failure::PARSE, msg);
        }
        CorpusError::Points { source: PointsError::Syntax(_), .. } => Failure::PARSE,
        CorpusError::Points { source: PointsError::Dimension { .. }, .. } => Failure::DIMENSION,
    };
    Failure::new(code, e.to_string())
}

fn bench_entry(e: &CorpusEntry, a: &BenchArgs) -> Result<Vec<BenchRow>, Failure> {
    let d = e.input_arity();
    let lib = &e.parsed.registry;
    let prog = &e.parsed.program;
    let queries: Vec<(usize, Vec<f64>, Option<Vec<f64>>)> = if e.points.is_empty() {
        vec![(0, vec![0.0; d], None)]
    } else {
        e.points.iter().map(|p| (p.line, p.x.clone(), p.v.clone())).collect()
    };
    let opts = AsdOptions::default();
    let mut rows = Vec::with_capacity(queries.len());
    for (k, (line, x, v)) in queries.into_iter().enumerate() {
        let v = v.unwrap_or_else(|| direction_for_seed(d.max(1), a.seed.wrapping_add(k as u64)));
        let cost = |variant| -> Result<Cost, Failure> {
            let r = asd_run::<f64>(variant, prog, &x, &v, lib, &opts).map_err(asd_failure)?;
            Ok(Cost::from(&r.cost))
        };
        let flat = match a.variant {
            BenchVariant::Flat | BenchVariant::Both => Some(cost(Variant::Flat)?),
            BenchVariant::Nested => None,
        };
        let nested = match a.variant {
            BenchVariant::Nested | BenchVariant::Both => Some(cost(Variant::Nested)?),
            BenchVariant::Flat => None,
        };
        let reverse = if e.is_smooth() {
            let r = reverse_gradient::<f64>(prog, &x, lib).map_err(asd_failure)?;
            Some(Cost::from(&r.cost))
        } else {
            None
        };
        rows.push(BenchRow { program: e.name.clone(), line, x, direction: v, flat, nested, reverse });
    }
    Ok(rows)
}

fn max_ratio<'a>(costs: impl Iterator<Item = &'a Cost>) -> Option<f64> {
    costs.map(|c| c.ratio).reduce(f64::max)
}

pub fn bench(a: &BenchArgs) -> Outcome {
    let opts = ParseOptions { cq_check: !a.no_cq_check, ..ParseOptions::default() };
    let corpus = load_corpus(&a.corpus, &builtin_registry(), &opts).map_err(corpus_failure)?;
    let per_entry: Vec<Result<Vec<BenchRow>, Failure>> = corpus.par_iter().map(|e| bench_entry(e, a)).collect();
    let mut rows = Vec::new();
    for r in per_entry {
        rows.extend(r?);
    }
    let bounds = Bounds { flat: FLAT_BOUND, nested: NESTED_BOUND, reverse: REVERSE_BOUND };
    let mut violations = Vec::new();
    for row in &rows {
        for (engine, cost, bound) in
            [("flat", &row.flat, bounds.flat), ("nested", &row.nested, bounds.nested), ("reverse", &row.reverse, bounds.reverse)]
        {
            if let Some(c) = cost {
                if c.ratio > bound {
                    violations.push(Violation {
                        program: row.program.clone(),
                        line: row.line,
                        engine: engine.to_string(),
                        ratio: c.ratio,
                        bound,
                    });
                }
            }
        }
    }
    let variants = match a.variant {
        BenchVariant::Flat => vec!["flat"],
        BenchVariant::Nested => vec!["nested"],
        BenchVariant::Both => vec!["flat", "nested"],
    };
    let report = BenchReport {
        corpus: a.corpus.display().to_string(),
        variants: variants.into_iter().map(String::from).collect(),
        seed: a.seed,
        programs: corpus.len(),
        max_flat: max_ratio(rows.iter().filter_map(|r| r.flat.as_ref())),
        max_nested: max_ratio(rows.iter().filter_map(|r| r.nested.as_ref())),
        max_reverse: max_ratio(rows.iter().filter_map(|r| r.reverse.as_ref())),
        passed: violations.is_empty(),
        violations,
        rows,
        bounds,
    };
    let code = if report.passed { 0 } else { Failure::BOUND };
    let note = if report.passed {
        None
    } else {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{} line {}: {} ratio {:.4} exceeds {}", v.program, v.line, v.engine, v.ratio, v.bound))
            .collect();
        Some(lines.join("\n"))
    };
    if a.json {
        return Ok(Done { out: json(Report::Bench(report)), code, note });
    }
    let cell = |c: &Option<Cost>| c.as_ref().map_or("-".to_string(), |c| format!("{:.3}", c.ratio));
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>5} {:>8} {:>8} {:>8}", "program", "line", "flat", "nested", "reverse");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>8} {:>8} {:>8}",
            row.program,
            row.line,
            cell(&row.flat),
            cell(&row.nested),
            cell(&row.reverse)
        );
    }
    let opt = |m: Option<f64>| m.map_or("-".to_string(), |m| format!("{m:.3}"));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{} programs, {} queries; max flat {} (<= {}), max nested {} (<= {}), max reverse on smooth programs {} (<= {})",
        report.programs,
        report.rows.len(),
        opt(report.max_flat),
        FLAT_BOUND,
        opt(report.max_nested),
        NESTED_BOUND,
        opt(report.max_reverse),
        REVERSE_BOUND
    );
    let _ = writeln!(out, "{}", if report.passed { "all bounds hold" } else { "BOUND VIOLATED" });
    Ok(Done { out, code, note })
}

pub fn naive(a: &NaiveArgs) -> Outcome {
    let parsed = load(&a.program)?;
    let d = parsed.program.input_arity;
    let x = vector("at", &a.at, d)?;
    let (v, seed) = direction(&a.direction, d)?;
    let conv = NaiveConvention::with_relu_zero(a.relu_zero);
    let naive = naive_ad(&parsed.program, &x, &parsed.registry, &conv).map_err(oracle_failure)?;
    let correct = asd_program_flat(&parsed.program, &x, &v, &parsed.registry, &AsdOptions::default())
        .map_err(asd_failure)?
        .gradient;
    let agree = naive.iter().zip(&correct).all(|(p, q)| (p - q).abs() <= 1e-12 * p.abs().max(1.0));
    let report = NaiveReport {
        program: program_name(&a.program.program),
        x,
        relu_zero: a.relu_zero,
        naive,
        correct,
        seed,
        direction: v,
        agree,
    };
    if a.program.json {
        return Ok(Done::ok(json(Report::Naive(report))));
    }
    let mut out = String::new();
    let r = &report;
    let _ = writeln!(out, "program  {}", r.program);
    let _ = writeln!(out, "x        {}", vec_str(&r.x));
    let _ = writeln!(out, "naive    {} (relu'(0) = {})", vec_str(&r.naive), r.relu_zero);
    let _ = writeln!(out, "correct  {}", vec_str(&r.correct));
    let _ = writeln!(out, "{}", if r.agree { "agree" } else { "DIFFER" });
    Ok(Done::ok(out))
}

fn exact_vector(flag: &str, text: &str, dim: usize) -> Result<Vec<BigRational>, Failure> {
    let v: Vec<BigRational> = text
        .split(',')
        .map(|t| {
            parse_rational(t).ok_or_else(|| Failure::new(Failure::OTHER, format!("--{flag}: invalid number {:?}", t.trim())))
        })
        .collect::<Result<_, _>>()?;
    if v.len() != dim {
        return Err(Failure::new(
            Failure::DIMENSION,
            format!("--{flag} has {} component(s), the program takes {dim}", v.len()),
        ));
    }
    Ok(v)
}

/// A constant constraint of the wrong sign, or one polynomial required to
/// have both signs.
fn infeasible(p: &PieceDescription) -> bool {
    let cs = &p.constraints;
    cs.iter().any(|(h, s)| h.is_constant() && Sign::of(&h.eval(&vec![BigRational::default(); h.nvars()])) != *s)
        || cs.iter().enumerate().any(|(i, (h, s))| cs[..i].iter().any(|(g, t)| g == h && t != s))
}

pub fn pieces(a: &PiecesArgs) -> Outcome {
    let parsed = load(&a.program)?;
    let prog = &parsed.program;
    let lib = &parsed.registry;
    let d = prog.input_arity;
    let limits = ExtractionLimits { max_branches: a.max_branches, ..ExtractionLimits::default() };
    let all = ProgramPieces::extract(prog, lib, &limits).map_err(|e| match e {
        OracleError::Extraction(
            ref x @ (ExtractionError::TooManyBranches { .. }
            | ExtractionError::TermLimit { .. }
            | ExtractionError::TooManyPieces { .. }),
        ) => Failure::new(Failure::EXTRACTION, x.to_string()),
        e => oracle_failure(e),
    })?;
    let mut unqualified: Vec<String> = prog
        .library_calls()
        .filter_map(|(_, name, _)| lib.get(name))
        .filter(|g| !g.claims_qualified)
        .map(|g| g.name.clone())
        .collect();
    unqualified.sort();
    unqualified.dedup();

    let pieces: Vec<PieceReport> = all
        .pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| !infeasible(p))
        .map(|(index, p)| PieceReport {
            index,
            word: trace_signs(&p.call_words),
            polynomial: p.piece.to_string(),
            constraints: p
                .constraints
                .iter()
                .map(|(h, s)| ConstraintReport { polynomial: h.to_string(), sign: s.as_i8() })
                .collect(),
        })
        .collect();

    let mut warnings = Vec::new();
    let selection = match &a.at {
        None => None,
        Some(at) => {
            let xr = exact_vector("at", at, d)?;
            let (vr, seed) = match &a.direction.dir {
                Some(text) => (exact_vector("dir", text, d)?, None),
                None => {
                    let v = direction_for_seed(d.max(1), a.direction.seed);
                    let vr = subgrad_core::scalar::rationals(&v).expect("sampled directions are finite");
                    (vr, Some(a.direction.seed))
                }
            };
            if let CqOutcome::Fail(w) = cq_diagnostic_pieces(&all.pieces, &xr, &vr) {
                warnings.push(format!("constraint qualification fails: {w}"));
            }
            let sel = all.select(&xr, &vr).map_err(oracle_failure)?;
            Some(SelectionReport {
                x: to_floats(&xr),
                seed,
                direction: to_floats(&vr),
                index: sel.index,
                value: sel.value.to_string(),
                derivative: sel.derivative.to_string(),
                gradient: sel.gradient.iter().map(|g| g.to_string()).collect(),
                gradient_f64: to_floats(&sel.gradient),
            })
        }
    };
    let report = PiecesReport { program: program_name(&a.program.program), pieces, selection, unqualified, warnings };
    if a.program.json {
        let note = if report.warnings.is_empty() { None } else { Some(report.warnings.join("\n")) };
        return Ok(Done { out: json(Report::Pieces(report)), code: 0, note });
    }
    let mut out = String::new();
    let r = &report;
    let _ = writeln!(out, "program {}: {} piece(s)", r.program, r.pieces.len());
    for p in &r.pieces {
        let _ = writeln!(out, "piece {} {}: {}", p.index, words_str(&p.word), p.polynomial);
        for c in &p.constraints {
            let rel = if c.sign > 0 { ">= 0" } else { "< 0" };
            let _ = writeln!(out, "    {} {rel}", c.polynomial);
        }
    }
    for name in &r.unqualified {
        let _ = writeln!(out, "note: {name} is registered without a qualification claim");
    }
    if let Some(s) = &r.selection {
        let _ = writeln!(
            out,
            "selected piece {} at x={} along v={}: value {}, derivative {}, gradient [{}]",
            s.index,
            vec_str(&s.x),
            vec_str(&s.direction),
            s.value,
            s.derivative,
            s.gradient.join(", ")
        );
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    Ok(Done::ok(out))
}
