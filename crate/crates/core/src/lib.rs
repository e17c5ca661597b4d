//! Automatic subdifferentiation for programs built from affine maps,
//! monomials and branching library functions.

pub mod asd;
pub mod corpus;
pub mod dsl;
pub mod graph;
pub mod library;
pub mod oracle;
pub mod scalar;
