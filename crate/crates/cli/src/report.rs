//! Machine-readable reports. Every report carries a `kind` tag and is
//! described by `schema/report.schema.json`.

use serde::{Deserialize, Serialize};

use subgrad_core::asd::CostReport;
use subgrad_core::graph::BranchTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Run(RunReport),
    Check(CheckReport),
    Bench(BenchReport),
    Naive(NaiveReport),
    Pieces(PiecesReport),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub runtime_f: u64,
    pub runtime_asd: u64,
    pub ratio: f64,
}

impl From<&CostReport> for Cost {
    fn from(c: &CostReport) -> Self {
        Cost { runtime_f: c.runtime_f, runtime_asd: c.runtime_asd, ratio: c.ratio }
    }
}

/// Branch words as `+1`/`-1` lists, one per library call.
pub fn trace_signs(traces: &[BranchTrace]) -> Vec<Vec<i8>> {
    traces.iter().map(|t| t.as_i8()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub seeds: Vec<u64>,
    pub gradients: Vec<Vec<f64>>,
    /// Largest componentwise difference from the first gradient.
    pub spread: f64,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub program: String,
    pub variant: String,
    pub x: Vec<f64>,
    /// Absent when the direction was given explicitly.
    pub seed: Option<u64>,
    pub direction: Vec<f64>,
    pub value: f64,
    pub derivative: f64,
    pub gradient: Vec<f64>,
    pub cost: Cost,
    pub traces: Vec<Vec<i8>>,
    pub ties: usize,
    pub cross_check: Option<CrossCheckReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRowReport {
    pub oracle: String,
    pub status: String,
    pub expected: Vec<f64>,
    pub found: Vec<f64>,
    pub measure: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub program: String,
    pub engine: String,
    pub x: Vec<f64>,
    pub seed: Option<u64>,
    pub direction: Vec<f64>,
    pub value: f64,
    pub derivative: f64,
    pub gradient: Vec<f64>,
    pub hull_directions: usize,
    pub tol: f64,
    pub rows: Vec<CheckRowReport>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub program: String,
    /// Line of the query in the points file.
    pub line: usize,
    pub x: Vec<f64>,
    pub direction: Vec<f64>,
    pub flat: Option<Cost>,
    pub nested: Option<Cost>,
    /// Plain reverse mode, reported for smooth programs only.
    pub reverse: Option<Cost>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub flat: f64,
    pub nested: f64,
    pub reverse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub program: String,
    pub line: usize,
    pub engine: String,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub corpus: String,
    pub variants: Vec<String>,
    pub seed: u64,
    pub programs: usize,
    pub rows: Vec<BenchRow>,
    pub bounds: Bounds,
    pub max_flat: Option<f64>,
    pub max_nested: Option<f64>,
    pub max_reverse: Option<f64>,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveReport {
    pub program: String,
    pub x: Vec<f64>,
    pub relu_zero: f64,
    pub naive: Vec<f64>,
    pub correct: Vec<f64>,
    pub seed: Option<u64>,
    pub direction: Vec<f64>,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub polynomial: String,
    /// `+1` for `h >= 0`, `-1` for `h < 0`.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceReport {
    pub index: usize,
    pub word: Vec<Vec<i8>>,
    pub polynomial: String,
    pub constraints: Vec<ConstraintReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub x: Vec<f64>,
    pub seed: Option<u64>,
    pub direction: Vec<f64>,
    pub index: usize,
    /// Exact values as `p/q` strings.
    pub value: String,
    pub derivative: String,
    pub gradient: Vec<String>,
    pub gradient_f64: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecesReport {
    pub program: String,
    pub pieces: Vec<PieceReport>,
    pub selection: Option<SelectionReport>,
    /// Libraries called without a qualification claim.
    pub unqualified: Vec<String>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    proptest! {
        #[test]
        fn run_reports_round_trip(
            x in prop::collection::vec(finite(), 1..5),
            g in prop::collection::vec(finite(), 1..5),
            value in finite(),
            derivative in finite(),
            seed in prop::option::of(any::<u64>()),
            runtime_f in 0u64..1_000_000,
            runtime_asd in 0u64..1_000_000,
            traces in prop::collection::vec(prop::collection::vec(prop::sample::select(vec![1i8, -1]), 0..4), 0..4),
        ) {
            let report = Report::Run(RunReport {
                program: "p.prog".into(),
                variant: "flat".into(),
                direction: x.iter().map(|c| -c).collect(),
                x,
                seed,
                value,
                derivative,
                gradient: g,
                cost: Cost { runtime_f, runtime_asd, ratio: runtime_asd as f64 / runtime_f.max(1) as f64 },
                traces,
                ties: 0,
                cross_check: None,
            });
            let text = serde_json::to_string(&report).unwrap();
            let back: Report = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &report);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }
}
