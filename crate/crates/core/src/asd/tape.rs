use thiserror::Error;

use crate::graph::CostMeter;
use crate::scalar::Scalar;

/// One tape entry: a node value and its local partials `∂x_k/∂x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TapeRecord<S> {
    pub value: S,
    pub parents: Vec<(usize, S)>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TapeError {
    #[error("record {record} lists parent {parent}, which does not precede it")]
    NonTopological { record: usize, parent: usize },
    #[error("record {record} has a non-finite partial")]
    NonFinitePartial { record: usize },
    #[error("output {output} is outside a tape of {len} records")]
    OutputOutOfRange { output: usize, len: usize },
    #[error("tape has {records} records but claims {inputs} inputs")]
    MissingInputs { inputs: usize, records: usize },
}

/// Linearized computation: `inputs` parentless records, then one record per
/// computed node in topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape<S> {
    records: Vec<TapeRecord<S>>,
    inputs: usize,
    output: usize,
}

impl<S: Scalar> Tape<S> {
    pub fn new(inputs: &[S]) -> Self {
        Tape {
            records: inputs
                .iter()
                .map(|v| TapeRecord { value: v.clone(), parents: Vec::new() })
                .collect(),
            inputs: inputs.len(),
            output: inputs.len().saturating_sub(1),
        }
    }

    /// Builds a tape from raw parts without checking it; [`reverse_mode`]
    /// reports malformed tapes.
    pub fn from_records(records: Vec<TapeRecord<S>>, inputs: usize, output: usize) -> Self {
        Tape { records, inputs, output }
    }

    pub fn push(&mut self, value: S, parents: Vec<(usize, S)>) -> usize {
        self.records.push(TapeRecord { value, parents });
        self.records.len() - 1
    }

    pub fn set_output(&mut self, output: usize) {
        self.output = output;
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TapeRecord<S>] {
        &self.records
    }

    /// `children(t) = {k : t ∈ parents(k)}`, with the position of `t` in
    /// `parents(k)`; a parent listed twice appears twice.
    pub fn children(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.records.len()];
        for (k, r) in self.records.iter().enumerate() {
            for (pos, &(p, _)) in r.parents.iter().enumerate() {
                if p < k {
                    out[p].push((k, pos));
                }
            }
        }
        out
    }

    fn check(&self) -> Result<(), TapeError> {
        if self.records.len() < self.inputs {
            return Err(TapeError::MissingInputs { inputs: self.inputs, records: self.records.len() });
        }
        if self.output >= self.records.len() {
            return Err(TapeError::OutputOutOfRange { output: self.output, len: self.records.len() });
        }
        for (k, r) in self.records.iter().enumerate() {
            for (p, d) in &r.parents {
                if *p >= k {
                    return Err(TapeError::NonTopological { record: k, parent: *p });
                }
                if !d.is_finite() {
                    return Err(TapeError::NonFinitePartial { record: k });
                }
            }
        }
        Ok(())
    }
}

/// Adjoints `∂x_T/∂x_t` of the input records. Each adjoint is pulled from its
/// children in descending record order; every edge at or below the output
/// costs one multiplication and one addition.
pub fn reverse_mode<S: Scalar>(tape: &Tape<S>, meter: &mut CostMeter) -> Result<Vec<S>, TapeError> {
    tape.check()?;
    let children = tape.children();
    let out = tape.output;
    let mut adj: Vec<S> = vec![S::zero(); out + 1];
    adj[out] = S::one();
    for t in (0..out).rev() {
        let mut acc: Option<S> = None;
        for &(k, pos) in children[t].iter().rev() {
            if k > out {
                continue;
            }
            let term = adj[k].clone() * tape.records[k].parents[pos].1.clone();
            meter.mul(1);
            meter.add(1);
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        if let Some(a) = acc {
            adj[t] = a;
        }
    }
    Ok((0..tape.inputs).map(|i| adj.get(i).cloned().unwrap_or_else(S::zero)).collect())
}
