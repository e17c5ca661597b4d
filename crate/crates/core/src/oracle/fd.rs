use num_rational::BigRational;

use super::OracleError;
use crate::asd::{asd_program_flat, direction_for_seed, reverse_gradient, AsdOptions};
use crate::graph::{evaluate, BranchTrace, CostMeter, ProgramDef};
use crate::library::LibraryRegistry;
use crate::scalar::{rationals, to_floats, Scalar};

/// Arithmetic used for the sampled function values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdArithmetic {
    Float,
    /// Exact rational evaluation of `x + δv` and of the quotients, which
    /// removes cancellation from the difference quotient.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdSchedule {
    /// Strictly decreasing positive step sizes.
    pub steps: Vec<f64>,
    /// Highest extrapolation order.
    pub order: usize,
    pub arithmetic: FdArithmetic,
    /// Estimates with a larger error are flagged as non-convergent.
    pub threshold: f64,
}

impl Default for FdSchedule {
    fn default() -> Self {
        FdSchedule {
            steps: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            order: 3,
            arithmetic: FdArithmetic::Float,
            threshold: 1e-6,
        }
    }
}

impl FdSchedule {
    pub fn exact() -> Self {
        FdSchedule { arithmetic: FdArithmetic::Exact, ..FdSchedule::default() }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let ok = !self.steps.is_empty()
            && self.steps.iter().all(|&s| s > 0.0 && s.is_finite())
            && self.steps.windows(2).all(|w| w[0] > w[1]);
        if ok {
            Ok(())
        } else {
            Err(OracleError::BadSchedule)
        }
    }
}

/// Extrapolated estimate with its error bound.
#[derive(Clone, Debug, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub error: f64,
    pub steps_used: usize,
    /// `error <= threshold`.
    pub converged: bool,
}

/// Polynomial extrapolation to `h = 0` by Neville's tableau, returning the
/// entry with the smallest error estimate. `floor[i]` is a roundoff bound for
/// sample `i`.
pub fn extrapolate(h: &[f64], q: &[f64], floor: &[f64], order: usize) -> (f64, f64) {
    assert!(!h.is_empty() && h.len() == q.len() && q.len() == floor.len());
    let n = h.len();
    let mut best = (q[n - 1], f64::INFINITY);
    let mut prev: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut row = vec![q[i]];
        for j in 1..=order.min(i) {
            let t = row[j - 1] + (row[j - 1] - prev[j - 1]) * h[i] / (h[i - j] - h[i]);
            row.push(t);
        }
        for j in 0..row.len() {
            if i == 0 {
                continue;
            }
            let trunc = if j == 0 {
                (row[0] - prev[0]).abs()
            } else {
                let a = (row[j] - row[j - 1]).abs();
                let b = if j - 1 < prev.len() { (row[j] - prev[j - 1]).abs() } else { a };
                a.max(b)
            };
            let amp = (1u32 << j.min(16)) as f64;
            let err = trunc.max(floor[i] * amp);
            if err < best.1 || (err == best.1 && !best.1.is_finite()) {
                best = (row[j], err);
            }
        }
        prev = row;
    }
    if n == 1 {
        best.1 = f64::INFINITY;
    }
    best
}

struct Sample {
    step: f64,
    trace: Vec<BranchTrace>,
}

fn shifted<S: Scalar>(x: &[S], v: &[S], delta: &S) -> Vec<S> {
    x.iter().zip(v).map(|(a, b)| a.clone() + delta.clone() * b.clone()).collect()
}

/// Samples taken along the ray whose branch traces match the smallest step.
fn matching<T>(samples: Vec<(Sample, T)>) -> Vec<(Sample, T)> {
    let Some(last) = samples.last().map(|s| s.0.trace.clone()) else {
        return samples;
    };
    samples.into_iter().filter(|s| s.0.trace == last).collect()
}

/// One-sided directional derivative `lim (f(x + δv) − f(x)) / δ` by
/// extrapolating difference quotients over the schedule. Only steps whose
/// branch traces agree with the smallest step are used, so every quotient
/// comes from one polynomial piece.
pub fn fd_directional(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    schedule: &FdSchedule,
) -> Result<FdEstimate, OracleError> {
    schedule.validate()?;
    if x.len() != prog.input_arity || v.len() != prog.input_arity {
        return Err(OracleError::Dimension { expected: prog.input_arity, found: x.len().max(v.len()) });
    }
    let mut samples: Vec<(Sample, (f64, f64))> = Vec::new();
    match schedule.arithmetic {
        FdArithmetic::Float => {
            let f0 = evaluate(prog, x, lib, &mut CostMeter::new())?.value;
            for &h in &schedule.steps {
                let y = shifted(x, v, &h);
                let e = evaluate(prog, &y, lib, &mut CostMeter::new())?;
                let q = (e.value - f0) / h;
                // rounding of f, plus the displacement error of fl(x + hv)
                // propagated with slope about |q| per coordinate
                let ymax = y.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                let spread = ymax * q.abs().max(1.0) * y.len() as f64;
                let floor = f64::EPSILON * (4.0 * (f0.abs() + e.value.abs()) + spread) / h;
                samples.push((Sample { step: h, trace: e.traces }, (q, floor)));
            }
        }
        FdArithmetic::Exact => {
            let xr = rationals(x).ok_or(OracleError::NonFinite)?;
            let vr = rationals(v).ok_or(OracleError::NonFinite)?;
            let f0 = evaluate(prog, &xr, lib, &mut CostMeter::new())?.value;
            for &h in &schedule.steps {
                let hr = BigRational::from_float(h).expect("finite step");
                let e = evaluate(prog, &shifted(&xr, &vr, &hr), lib, &mut CostMeter::new())?;
                let q = (e.value - f0.clone()) / hr;
                let qf = q.to_f64();
                samples.push((Sample { step: h, trace: e.traces }, (qf, 2.0 * f64::EPSILON * qf.abs())));
            }
        }
    }
    let used = matching(samples);
    let h: Vec<f64> = used.iter().map(|s| s.0.step).collect();
    let q: Vec<f64> = used.iter().map(|s| s.1 .0).collect();
    let floor: Vec<f64> = used.iter().map(|s| s.1 .1).collect();
    let (value, error) = extrapolate(&h, &q, &floor, schedule.order);
    Ok(FdEstimate { value, error, steps_used: h.len(), converged: error <= schedule.threshold })
}

/// Extrapolated limiting gradient with its error bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitingGradient {
    pub gradient: Vec<f64>,
    pub error: f64,
    pub steps_used: usize,
}

/// A gradient and the branch traces that produced it.
type Resolved<S> = (Vec<S>, Vec<BranchTrace>);

/// Directions probed at a tied point before its gradient is trusted.
const TIE_PROBES: u64 = 4;

fn gradient_at<S: Scalar>(
    prog: &ProgramDef,
    x: &[S],
    v: &[S],
    lib: &LibraryRegistry,
) -> Result<Option<Resolved<S>>, OracleError> {
    let r = asd_program_flat(prog, x, v, lib, &AsdOptions::default())?;
    let plain = reverse_gradient(prog, x, lib)?;
    if r.ties == 0 {
        if plain.gradient != r.gradient || plain.traces != r.traces {
            return Err(OracleError::Inconsistent(
                "engine and plain reverse mode differ at a point with no ties".into(),
            ));
        }
        return Ok(Some((r.gradient, r.traces)));
    }
    // A tie that persists on an open set (relu of a saturated relu) leaves
    // f smooth there. Accept the point only if every probed direction,
    // including -v, resolves to the plain reverse-mode gradient.
    let d = prog.input_arity;
    let neg: Vec<S> = v.iter().map(|c| S::zero() - c.clone()).collect();
    let mut probes = vec![v.to_vec(), neg];
    for seed in 0..TIE_PROBES {
        probes.push(direction_for_seed(d, seed).into_iter().map(S::from_f64).collect());
    }
    for w in &probes {
        let g = asd_program_flat(prog, x, w, lib, &AsdOptions::default())?.gradient;
        if g != plain.gradient {
            return Ok(None);
        }
    }
    Ok(Some((plain.gradient, plain.traces)))
}

/// `lim_{δ↓0} ∇f(x + δv)`: gradients at perturbed points where every branch
/// test is strictly resolved, extrapolated to `δ = 0` componentwise. A step
/// with a tie is used only when the tie is stable under every probed
/// direction; other steps landing on a kink are skipped.
pub fn limiting_gradient(
    prog: &ProgramDef,
    x: &[f64],
    v: &[f64],
    lib: &LibraryRegistry,
    schedule: &FdSchedule,
) -> Result<LimitingGradient, OracleError> {
    schedule.validate()?;
    let d = prog.input_arity;
    if x.len() != d || v.len() != d {
        return Err(OracleError::Dimension { expected: d, found: x.len().max(v.len()) });
    }
    let mut samples: Vec<(Sample, Vec<f64>)> = Vec::new();
    match schedule.arithmetic {
        FdArithmetic::Float => {
            for &h in &schedule.steps {
                if let Some((g, trace)) = gradient_at(prog, &shifted(x, v, &h), v, lib)? {
                    samples.push((Sample { step: h, trace }, g));
                }
            }
        }
        FdArithmetic::Exact => {
            let xr = rationals(x).ok_or(OracleError::NonFinite)?;
            let vr = rationals(v).ok_or(OracleError::NonFinite)?;
            for &h in &schedule.steps {
                let hr = BigRational::from_float(h).expect("finite step");
                if let Some((g, trace)) = gradient_at(prog, &shifted(&xr, &vr, &hr), &vr, lib)? {
                    samples.push((Sample { step: h, trace }, to_floats(&g)));
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(OracleError::NoValidSteps);
    }
    let used = matching(samples);
    let h: Vec<f64> = used.iter().map(|s| s.0.step).collect();
    let mut gradient = Vec::with_capacity(d);
    let mut error: f64 = 0.0;
    for k in 0..d {
        let q: Vec<f64> = used.iter().map(|s| s.1[k]).collect();
        let floor: Vec<f64> = q.iter().map(|c| 4.0 * f64::EPSILON * c.abs().max(1.0)).collect();
        let (value, err) = if h.len() == 1 {
            (q[0], f64::INFINITY)
        } else {
            extrapolate(&h, &q, &floor, schedule.order)
        };
        gradient.push(value);
        error = error.max(err);
    }
    Ok(LimitingGradient { gradient, error, steps_used: h.len() })
}
