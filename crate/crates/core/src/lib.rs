//! Exact constructions of ε-Hadamard matrices and approximate real
//! mutually unbiased bases (ARMUBs).
//!
//! The pipeline is: a real Hadamard matrix of order `4n` ([`hadamard`]) is
//! reduced to an orthogonal matrix of order `k = 4n − t` whose entries all
//! have magnitude close to `1/√k` ([`epsh`]); the rows of that matrix are
//! laid over the blocks of a resolvable design with pairwise block
//! intersections of at most one point ([`rbd`]) to give one orthonormal
//! basis of `R^d`, `d = k·s`, per parallel class ([`armub`]); finally the
//! cross-basis inner products are enumerated and every bound is checked
//! with exact arithmetic ([`verify`]).

pub mod algebra;
pub mod armub;
pub mod epsh;
pub mod error;
pub mod hadamard;
pub mod par;
pub mod pipeline;
pub mod rbd;
pub mod verify;

pub use error::{Error, Result};
pub use par::Execution;
