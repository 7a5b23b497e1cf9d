//! Combinatorial network pruning via l0-constrained ridge regression.
//!
//! The crate solves
//!
//! ```text
//! min_w  1/2 ||b - A w||^2 + (n*lambda/2) ||w - wbar||^2   s.t.  ||w||_0 <= k
//! ```
//!
//! where `A` stacks per-mini-batch loss gradients of a trained model at
//! `wbar` and `b = A wbar - alpha e`. Modules build on each other from the
//! problem core up to the multi-stage driver:
//!
//! * [`problem`] — instance types, objective, gradient
//! * [`kernels`] — top-k selection, hard thresholding, Lipschitz bound
//! * [`linesearch`] — breakpoint-aware step-size search
//! * [`solver`] — IHT with periodic coordinate descent
//! * [`activeset`] — active-set outer loop with full-space escape probes
//! * [`backsolve`] — exact ridge solve on a fixed support (Woodbury)
//! * [`blockwise`] — layer-aware block decomposition
//! * [`multistage`] — gradual-sparsification driver over fresh gradients
//! * [`fisher`] — gradient oracles, toy MLP, low-rank matrix assembly
//! * [`baselines`] — magnitude/OBD pruning and constant-step IHT
//! * [`verify`] — self-check suites built on independent oracles
//! * [`synthetic`] — seeded generators for tests and the CLI

pub mod activeset;
pub mod backsolve;
pub mod baselines;
pub mod blockwise;
pub mod error;
pub mod fisher;
pub mod kernels;
pub mod linesearch;
pub mod multistage;
pub mod problem;
pub mod solver;
pub mod synthetic;
pub mod verify;

pub use error::{ChitaError, Result};
pub use problem::{build_problem, GradientMatrix, ProblemInstance, SparseSolution};
