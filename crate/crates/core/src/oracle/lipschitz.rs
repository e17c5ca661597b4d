use rand::Rng;

use super::OracleError;
use crate::asd::{sample_direction, seeded_rng};
use crate::graph::{evaluate_branch, CostMeter};
use crate::library::LibraryFunction;

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub quotient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    /// Largest sampled `|g(x) − g(y)| / |x − y|`.
    pub constant: f64,
    /// The pair attaining `constant`.
    pub witness: LipschitzWitness,
    /// `constant` exceeded the cap.
    pub exceeded: bool,
    pub pairs: usize,
}

/// Samples point pairs in the box `region` (half independent, half at
/// distance about `1e-4` along a random direction) and reports the largest
/// difference quotient.
pub fn lipschitz_probe(
    g: &LibraryFunction,
    region: &[(f64, f64)],
    samples: usize,
    seed: u64,
    cap: f64,
) -> Result<LipschitzReport, OracleError> {
    if region.len() != g.arity {
        return Err(OracleError::Dimension { expected: g.arity, found: region.len() });
    }
    if region.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(OracleError::NonFinite);
    }
    let mut rng = seeded_rng(seed);
    let point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        region.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) }).collect()
    };
    let f = |x: &[f64]| evaluate_branch(&g.program, x, &mut CostMeter::new()).map(|r| r.0);
    let mut best = LipschitzWitness { x: Vec::new(), y: Vec::new(), quotient: 0.0 };
    let mut pairs = 0;
    for i in 0..samples {
        let x = point(&mut rng);
        let y = if i % 2 == 0 {
            point(&mut rng)
        } else {
            let dir = sample_direction(g.arity, &mut rng);
            x.iter()
                .zip(&dir)
                .zip(region)
                .map(|((a, b), &(lo, hi))| (a + 1e-4 * b).clamp(lo, hi))
                .collect()
        };
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        pairs += 1;
        let q = (f(&x)? - f(&y)?).abs() / dist;
        if q > best.quotient || best.x.is_empty() {
            best = LipschitzWitness { x, y, quotient: q };
        }
    }
    Ok(LipschitzReport { constant: best.quotient, exceeded: best.quotient > cap, witness: best, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Instruction, Polynomial, Step, BranchProgram};
    use crate::library::{builtin_registry, make_piecewise_poly};

    #[test]
    fn builtin_constants() {
        let lib = builtin_registry();
        for name in ["relu", "abs"] {
            let r = lipschitz_probe(lib.get(name).unwrap(), &[(-1.0, 1.0)], 2000, 1, 1e3).unwrap();
            assert!((r.constant - 1.0).abs() < 1e-6 && !r.exceeded, "{name}: {r:?}");
        }
        let r = lipschitz_probe(lib.get("max2").unwrap(), &[(-1.0, 1.0); 2], 2000, 1, 1e3).unwrap();
        assert!(r.constant <= 1.0 + 1e-9 && r.constant > 0.9, "{r:?}");
    }

    #[test]
    fn square_ladder_on_wide_box() {
        let x = Polynomial::var(1, 0);
        let g = make_piecewise_poly("sq", &[0.0], &[x.pow(2), x.pow(2)]).unwrap();
        let r = lipschitz_probe(&g, &[(-2.0, 2.0)], 4000, 3, 1e3).unwrap();
        assert!(r.constant <= 4.0 && r.constant > 3.9, "{r:?}");
    }

    #[test]
    fn flags_unbounded_slope() {
        // x^25 on [-2, 2] has slope up to 25 * 2^24
        let bp = BranchProgram::new(
            1,
            Step::compute(Instruction::monomial(1.0, &[(0, 25)]), Step::ret(1)),
        )
        .unwrap();
        let g = LibraryFunction::new("steep", bp, true);
        let r = lipschitz_probe(&g, &[(-2.0, 2.0)], 500, 0, 1e6).unwrap();
        assert!(r.exceeded);
        assert!(r.witness.quotient == r.constant);
    }
}
