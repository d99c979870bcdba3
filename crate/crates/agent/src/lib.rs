//! The self-correcting formulation loop: prompt templates and chat clients,
//! the formulate/spec/execute/judge state machine, and the evaluation harness.

pub mod eval;
pub mod gateway;
pub mod pipeline;
