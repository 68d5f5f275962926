//! Exact arithmetic: rationals, the quadratic fields Q(√m), finite fields
//! GF(p^e), and small dense matrices over Q(√m).

pub mod gf;
pub mod matrix;
pub mod quad;
pub mod rational;

pub use gf::{gf_make, GfElem, GfField};
pub use matrix::QuadMatrix;
pub use quad::{quad_arith, quad_sign, quad_to_float, QuadNum, QuadOp};
pub use rational::Rational;
