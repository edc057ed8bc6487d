//! Monte Carlo Feynman–Kac solvers and structural checks for degenerate
//! (hypoelliptic) diffusions `dX = σ(X) dB + b(X) dt`.

pub mod catalog;
pub mod error;
pub mod estimators;
pub mod expr;
pub mod fields;
pub mod hormander;
mod observable;
pub mod paths;
pub mod rng;
pub mod sle;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{MCEstimate, ObservableSpec};
pub use expr::{parse, Expr, Predicate};
pub use fields::{DiffusionSpec, VectorField};
pub use paths::{PathConfig, PathSample};
