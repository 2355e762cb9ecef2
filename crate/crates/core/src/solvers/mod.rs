//! Solvers for the hashing-scheme problem.
//!
//! * [`bcd_optimize`]: block coordinate descent on single-element moves.
//! * [`dp_optimize`]: exact dynamic program for the frequency-only case.
//! * [`brute_force`]: exhaustive enumeration, used as an oracle on tiny inputs.
//! * [`export_milp`]: the exact mixed-integer linear model, written as an LP file.

mod bcd;
mod brute;
mod dp;
mod milp;

pub use bcd::{bcd_optimize, best_single_move_gain, BcdConfig, BcdResult, Init};
pub use brute::{brute_force, BRUTE_FORCE_MAX_N};
pub use dp::{dp_optimize, dp_optimize_with, dp_partition, DpSolution, SegmentCost};
pub use milp::{export_milp, MilpModel, Row, RowSense, VarKind, Variable};
