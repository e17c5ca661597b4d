use num_rational::BigRational;
use num_traits::Zero;

use super::OracleError;
use crate::graph::{
    extract_program_pieces, piece_select, ExtractionLimits, PieceDescription, ProgramDef,
};
use crate::library::LibraryRegistry;

/// A program's global piece set, extracted once and queried many times.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramPieces {
    pub input_arity: usize,
    pub pieces: Vec<PieceDescription>,
}

/// The limiting piece along `x + δv` and its exact first-order data there.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSelection {
    pub index: usize,
    pub value: BigRational,
    /// `∇p_z(x) · v`, which equals the one-sided derivative along `v`.
    pub derivative: BigRational,
    pub gradient: Vec<BigRational>,
}

impl ProgramPieces {
    pub fn extract(
        prog: &ProgramDef,
        lib: &LibraryRegistry,
        limits: &ExtractionLimits,
    ) -> Result<Self, OracleError> {
        Ok(ProgramPieces {
            input_arity: prog.input_arity,
            pieces: extract_program_pieces(prog, lib, limits)?,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn select(
        &self,
        x: &[BigRational],
        v: &[BigRational],
    ) -> Result<ExactSelection, OracleError> {
        let d = self.input_arity;
        if x.len() != d || v.len() != d {
            return Err(OracleError::Dimension { expected: d, found: x.len().max(v.len()) });
        }
        let piece = piece_select(&self.pieces, x, v)?;
        let index = self
            .pieces
            .iter()
            .position(|p| std::ptr::eq(p, piece))
            .expect("selected piece belongs to the set");
        let gradient = piece.gradient_at(x);
        let derivative = gradient
            .iter()
            .zip(v)
            .fold(BigRational::zero(), |acc, (g, c)| acc + g * c);
        Ok(ExactSelection { index, value: piece.piece.eval(x), derivative, gradient })
    }
}

/// `∇p_z(x)` for the piece `z` entered along `x + δv`, in exact arithmetic.
pub fn exact_piece_gradient(
    prog: &ProgramDef,
    x: &[BigRational],
    v: &[BigRational],
    lib: &LibraryRegistry,
) -> Result<Vec<BigRational>, OracleError> {
    let pieces = ProgramPieces::extract(prog, lib, &ExtractionLimits::default())?;
    Ok(pieces.select(x, v)?.gradient)
}
