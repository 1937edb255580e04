//! Constrained quadratic solvers used by the optimizer.

pub mod admm;
pub mod oracle;
pub mod qcqp;

pub use admm::{solve_amplitudes_admm, AdmmKnobs, AdmmOutcome, AmplitudeProblem};
pub use qcqp::{solve_qcqp, QcqpBlock, QcqpProblem, QcqpSolution};
