pub mod agents;
pub mod consultation;
pub mod contexts;
pub mod dataset;
pub mod delta_pdg;
pub mod diff_model;
pub mod error;
pub mod eval;
pub mod export;
pub mod fixtures;
pub mod frontend;
pub mod llm;
pub mod pdg;

pub use error::{Error, Result};
