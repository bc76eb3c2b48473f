//! Command-line front end for mofkit. The binary is a thin clap layer over
//! the stage functions here, which the integration tests call directly.

pub mod config;
pub mod pipeline;
pub mod records;
pub mod stages;

/// Errors in how the program was invoked, as opposed to failures while
/// running; they map to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}
