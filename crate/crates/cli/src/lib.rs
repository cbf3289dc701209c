//! Command-line front end: single runs, benchmark sweeps and local
//! multi-process clusters.

pub mod bench;
pub mod launch;
pub mod report;
pub mod run;
pub mod spec;

use bspmr::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else if err.is_transport() {
        EXIT_TRANSPORT
    } else {
        EXIT_FAILURE
    }
}
