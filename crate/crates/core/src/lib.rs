//! Exact arithmetic circuits over prime fields and the rationals.
//!
//! * [`field`]: `F_p` and `Q` elements.
//! * [`polynomial`]: sparse multivariate polynomials and brute-force zero counts.
//! * [`network`]: layered networks, evaluation and expansion.
//! * [`divfree`]: compiling rational activations away into squaring circuits.
//! * [`cts`]: correct test sequences and randomized identity testing.
//! * [`geometry`]: cell counts, growth functions, VC-dimension and evasive checks.

pub mod cts;
pub mod divfree;
pub mod field;
pub mod geometry;
pub mod network;
pub mod polynomial;

pub use field::{Field, FieldElement, FieldError};
pub use network::{Activation, Edge, EvalTrace, Instantiation, NetworkSpec, NodeId, NodeValue};
pub use polynomial::{GridSpec, SparsePoly, UniPoly};
pub use divfree::{compile_divfree, DivFreeResult, IdentityTarget, C_EFF};
pub use cts::{cts_oracle, randomized_zero_test, CtsPlan, CtsReport, Verdict, ZeroTestTarget};
pub use geometry::{ClassifierFamily, ConstructibleDesc, PhamSystem, SetExpr};
