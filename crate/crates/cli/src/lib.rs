//! Experiment runner behind the `edpower` command: Monte-Carlo sweeps over the
//! power budget, CSV result tables and a matplotlib plot script.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod experiment;
pub mod selftest;
pub mod table;

pub use experiment::{run_experiment, ExperimentPlan, Row, RunStatus, Scheme};
pub use table::{emit_csv, emit_plot_script, load_csv, load_plan, parse_csv, parse_plan, HEADER};

use edpower::Error;

/// Process exit code for an error: 1 infeasible, 2 solver failure, 3 bad input.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::NoFeasiblePoint | Error::InfeasibleStart(_) => 1,
        Error::InvalidParameter { .. } | Error::Dimension(_) | Error::Domain(_) | Error::Parse(_) | Error::Io(_) => 3,
        _ => 2,
    }
}
