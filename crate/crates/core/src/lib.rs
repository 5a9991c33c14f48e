//! Morse homology of closed manifolds presented as level sets in Euclidean
//! space: critical points, signed flow-line counting, the Morse-Witten
//! complex, homology over Z and Z/2, and continuation maps.

pub mod complex;
pub mod continuation;
pub mod critical;
pub mod flow;
pub mod moduli;
pub mod geometry;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod snf;
pub mod symbolics;

pub use symbolics::{parse_expression, EvalError, Expr, Jet1, Jet2, ParseError, ScalarField};
