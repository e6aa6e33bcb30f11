//! Factored POMDP simulations: the IR, the `.fsim` language, the runtime,
//! scripted test suites and the tabular RL harness.

pub mod diag;
pub mod dsl;
pub mod eval;
pub mod expr;
pub mod flatten;
pub mod ir;
pub mod rl;
pub mod rng;
pub mod runtime;
pub mod value;
pub mod verify;
#[cfg(any(test, feature = "testgen"))]
pub mod testgen;
