use num_rational::BigRational;

use super::exact::{ExactSelection, ProgramPieces};
use super::fd::{fd_directional, FdArithmetic, FdEstimate, FdSchedule};
use super::hull::{hull_vertices, HullOptions, HullVerdict, MAX_HULL_DIM};
use super::naive::{naive_ad, NaiveConvention};
use super::OracleError;
use crate::asd::{asd_run, AsdOptions, Variant};
use crate::graph::{ExtractionLimits, ProgramDef};
use crate::library::LibraryRegistry;
use crate::scalar::{rationals, to_floats, Scalar};

/// The engine under test. `Naive` is the fixed-convention baseline, useful
/// as a known-faulty engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckEngine {
    AsdFlat,
    AsdNested,
    Naive,
}

impl CheckEngine {
    pub fn name(self) -> &'static str {
        match self {
            CheckEngine::AsdFlat => "asd-flat",
            CheckEngine::AsdNested => "asd-nested",
            CheckEngine::Naive => "naive",
        }
    }

    fn variant(self) -> Option<Variant> {
        match self {
            CheckEngine::AsdFlat => Some(Variant::Flat),
            CheckEngine::AsdNested => Some(Variant::Nested),
            CheckEngine::Naive => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub hull: HullOptions,
    pub fd: FdSchedule,
    pub limits: ExtractionLimits,
    /// Float tolerance against the exact piece gradient.
    pub exact_tol: f64,
    /// `|d − fd| <= max(fd_tol, fd_tol·|d|)`.
    pub fd_tol: f64,
    pub asd: AsdOptions,
    pub naive: NaiveConvention,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            hull: HullOptions::default(),
            fd: FdSchedule::default(),
            limits: ExtractionLimits::default(),
            exact_tol: 1e-9,
            fd_tol: 1e-6,
            asd: AsdOptions::default(),
            naive: NaiveConvention::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineOutput {
    pub value: f64,
    pub derivative: f64,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The oracle does not apply (bounds exceeded, dimension too large).
    Skipped,
    /// The oracle ran but could not decide.
    Inconclusive,
}

impl CheckStatus {
    pub fn name(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub oracle: &'static str,
    pub status: CheckStatus,
    /// Oracle value (empty when the oracle did not produce one).
    pub expected: Vec<f64>,
    /// Engine value compared against it.
    pub found: Vec<f64>,
    /// Distance or error measure the verdict was based on.
    pub measure: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub engine: CheckEngine,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub output: EngineOutput,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    /// No row failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| r.status == CheckStatus::Fail)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn run_engine(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    engine: CheckEngine,
    opts: &CheckOptions,
) -> Result<EngineOutput, OracleError> {
    match engine.variant() {
        Some(variant) => {
            let r = asd_run(variant, prog, x, v, lib, &opts.asd)?;
            Ok(EngineOutput { value: r.value, derivative: r.derivative, gradient: r.gradient })
        }
        None => {
            let value = crate::graph::evaluate(prog, x, lib, &mut crate::graph::CostMeter::new())?.value;
            let gradient = naive_ad(prog, x, lib, &opts.naive)?;
            let derivative = gradient.iter().zip(v).map(|(g, c)| g * c).sum();
            Ok(EngineOutput { value, derivative, gradient })
        }
    }
}

fn exact_rows(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    engine: CheckEngine,
    out: &EngineOutput,
    opts: &CheckOptions,
) -> Result<Vec<CheckRow>, OracleError> {
    let skipped = |oracle, detail: String| CheckRow {
        oracle,
        status: CheckStatus::Skipped,
        expected: vec![],
        found: vec![],
        measure: None,
        detail,
    };
    let pieces = match ProgramPieces::extract(prog, lib, &opts.limits) {
        Ok(p) => p,
        Err(OracleError::Extraction(e)) => {
            return Ok(vec![skipped("exact-gradient", e.to_string()), skipped("exact-replay", e.to_string())]);
        }
        Err(e) => return Err(e),
    };
    let xr = rationals(x).ok_or(OracleError::NonFinite)?;
    let vr = rationals(v).ok_or(OracleError::NonFinite)?;
    let sel: ExactSelection = pieces.select(&xr, &vr)?;
    let g = to_floats(&sel.gradient);
    let diff = max_diff(&g, &out.gradient).max((sel.derivative.to_f64() - out.derivative).abs());
    let mut rows = vec![CheckRow {
        oracle: "exact-gradient",
        status: if diff <= opts.exact_tol { CheckStatus::Pass } else { CheckStatus::Fail },
        expected: g,
        found: out.gradient.clone(),
        measure: Some(diff),
        detail: format!("piece {} of {}: {}", sel.index + 1, pieces.len(), pieces.pieces[sel.index]),
    }];
    rows.push(match engine.variant() {
        None => skipped("exact-replay", "the naive engine has no rational replay".into()),
        Some(variant) => {
            let r = asd_run::<BigRational>(variant, prog, &xr, &vr, lib, &opts.asd)?;
            let exact = r.gradient == sel.gradient && r.derivative == sel.derivative && r.value == sel.value;
            CheckRow {
                oracle: "exact-replay",
                status: if exact { CheckStatus::Pass } else { CheckStatus::Fail },
                expected: to_floats(&sel.gradient),
                found: to_floats(&r.gradient),
                measure: None,
                detail: if exact {
                    "rational replay equals the piece gradient exactly".into()
                } else {
                    format!(
                        "replay gives value {} derivative {}, piece gives value {} derivative {}",
                        r.value, r.derivative, sel.value, sel.derivative
                    )
                },
            }
        }
    });
    Ok(rows)
}

fn fd_row(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    out: &EngineOutput,
    opts: &CheckOptions,
) -> Result<CheckRow, OracleError> {
    let mut est: FdEstimate = fd_directional(prog, x, v, lib, &opts.fd)?;
    let mut mode = "float";
    if !est.converged && opts.fd.arithmetic == FdArithmetic::Float {
        let exact = FdSchedule { arithmetic: FdArithmetic::Exact, ..opts.fd.clone() };
        est = fd_directional(prog, x, v, lib, &exact)?;
        mode = "exact";
    }
    let diff = (est.value - out.derivative).abs();
    let tol = opts.fd_tol.max(opts.fd_tol * out.derivative.abs());
    let status = if !est.converged {
        CheckStatus::Inconclusive
    } else if diff <= tol {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(CheckRow {
        oracle: "fd-directional",
        status,
        expected: vec![est.value],
        found: vec![out.derivative],
        measure: Some(diff),
        detail: format!(
            "{mode} quotients, {} step(s), error estimate {:.3e}, tolerance {:.3e}",
            est.steps_used, est.error, tol
        ),
    })
}

fn hull_row(
    prog: &ProgramDef,
    x: &[f64],
    lib: &LibraryRegistry,
    out: &EngineOutput,
    opts: &CheckOptions,
) -> Result<CheckRow, OracleError> {
    let mut row = CheckRow {
        oracle: "clarke-hull",
        status: CheckStatus::Skipped,
        expected: vec![],
        found: out.gradient.clone(),
        measure: None,
        detail: String::new(),
    };
    if prog.input_arity > MAX_HULL_DIM {
        row.detail = format!("{} inputs exceed the hull limit of {MAX_HULL_DIM}", prog.input_arity);
        return Ok(row);
    }
    let hull = hull_vertices(prog, x, lib, &opts.hull)?;
    let dirs = opts.hull.n_dirs;
    let tol = opts.hull.tol;
    let vertices: Vec<String> = hull
        .vertices
        .iter()
        .map(|v| format!("({})", v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")))
        .collect();
    match hull.verdict(&out.gradient, tol) {
        HullVerdict::Member { distance } => {
            row.status = CheckStatus::Pass;
            row.measure = Some(distance);
            row.detail = format!("distance {distance:.3e} <= {tol:.1e} over {dirs} directions");
        }
        HullVerdict::NonMember { distance } => {
            row.status = CheckStatus::Fail;
            row.measure = Some(distance);
            row.detail = format!(
                "distance {distance:.3e} > {tol:.1e} over {dirs} directions; hull vertices {}",
                vertices.join(" ")
            );
        }
        HullVerdict::Inconclusive { valid_samples } => {
            row.status = CheckStatus::Inconclusive;
            row.detail = format!("only {valid_samples} of {dirs} directions gave a limiting gradient");
        }
    }
    Ok(row)
}

/// Runs the engine at `(x, v)` and checks it against the exact piece oracle,
/// finite differences and the sampled Clarke hull.
pub fn run_check(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    engine: CheckEngine,
    opts: &CheckOptions,
) -> Result<CheckReport, OracleError> {
    let d = prog.input_arity;
    if x.len() != d || v.len() != d {
        return Err(OracleError::Dimension { expected: d, found: x.len().max(v.len()) });
    }
    let output = run_engine(prog, x, v, lib, engine, opts)?;
    let mut rows = exact_rows(prog, x, v, lib, engine, &output, opts)?;
    rows.push(fd_row(prog, x, v, lib, &output, opts)?);
    rows.push(hull_row(prog, x, lib, &output, opts)?);
    Ok(CheckReport { engine, x: x.to_vec(), v: v.to_vec(), output, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::library::builtin_registry;

    const F2: &str = "inputs 1\nn2 = call relu n1\nn3 = affine 0 -1 n1\nn4 = call relu n3\nn5 = affine 0 1 n2 -1 n4\noutput n5\n";

    #[test]
    fn f2_passes_with_both_variants() {
        let lib = builtin_registry();
        let p = parse_program(F2, &lib).unwrap().program;
        for engine in [CheckEngine::AsdFlat, CheckEngine::AsdNested] {
            for v in [1.0, -1.0] {
                let r = run_check(&p, &[0.0], &[v], &lib, engine, &CheckOptions::default()).unwrap();
                assert!(r.passed(), "{r:#?}");
                assert!(r.rows.iter().all(|row| row.status == CheckStatus::Pass), "{r:#?}");
            }
        }
    }

    #[test]
    fn naive_engine_fails_hull_on_f2() {
        let lib = builtin_registry();
        let p = parse_program(F2, &lib).unwrap().program;
        let r = run_check(&p, &[0.0], &[1.0], &lib, CheckEngine::Naive, &CheckOptions::default()).unwrap();
        assert!(!r.passed());
        let hull = r.rows.iter().find(|row| row.oracle == "clarke-hull").unwrap();
        assert_eq!(hull.status, CheckStatus::Fail);
        assert_eq!(hull.measure, Some(1.0));
    }

    #[test]
    fn wide_programs_skip_the_hull() {
        let lib = builtin_registry();
        let p = parse_program(
            "inputs 5\nn6 = affine 0 1 n1 1 n2 1 n3 1 n4 1 n5\nn7 = call relu n6\noutput n7\n",
            &lib,
        )
        .unwrap()
        .program;
        let r = run_check(&p, &[0.0; 5], &[0.2, 0.2, 0.2, 0.2, -1.0], &lib, CheckEngine::AsdFlat, &CheckOptions::default())
            .unwrap();
        assert!(r.passed(), "{r:#?}");
        assert_eq!(r.rows.last().unwrap().status, CheckStatus::Skipped);
    }
}
