//! IO companion to `rashomon-core`: the MTX1 matrix format, IDX dataset
//! files, experiment configuration, run-directory persistence, report
//! emission, and the `rashomon` command-line tool built on all of it.

pub mod commands;
pub mod config;
pub mod idx;
pub mod mtx;
pub mod report;
pub mod rundir;

/// Process exit codes used by the `rashomon` binary.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const EXPERIMENT: i32 = 3;
}
