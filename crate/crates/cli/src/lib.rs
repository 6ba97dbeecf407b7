//! Library half of the `hypoco` command: scenario parsing, execution and
//! CSV merging, kept separate from argument handling so it can be tested
//! in-process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;
pub mod table;

pub use error::{CliError, CliResult};
pub use run::{run_file, run_scenario, RunOptions, RunOutcome};
pub use scenario::Scenario;
