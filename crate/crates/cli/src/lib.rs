//! Commands behind the `untangle` binary.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage error, 3 invalid input,
//! 4 configuration error, 5 backend or transport failure, 6 unusable model reply.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use commands::{
    cmd_eval, cmd_graph, cmd_synth_pool, cmd_tangle, cmd_untangle, exit_code, EvalOutput, InputSource, TangleOptions,
    TangleReport,
};
pub use config::{BackendKind, FileConfig, Overrides, RunConfig};
