//! Benchmark domains, experiment drivers and CSV output.

mod checks;
mod config;
mod domains;
mod experiments;

pub use checks::{run_checks, CheckOutcome};
pub use config::{DomainChoice, ExperimentConfig, MAX_INPROC_RANKS};
pub use domains::{make_fichera, make_lshape, make_unit_grid};
pub use experiments::{
    run_iteration_table, run_scaling, run_solve, scaling_splits, write_csv, write_header, ResultRow, ScalingMode,
    ScalingRow, TableRow, SCALING_HEADER, SOLVE_HEADER, TABLE_HEADER,
};
