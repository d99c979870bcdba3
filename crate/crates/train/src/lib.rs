//! Offline training-data utilities: SFT and KTO objectives over supplied
//! log-probabilities, and dataset construction from labeled records.

pub mod alignment;
pub mod forge;
mod jsonl;

pub use jsonl::{parse_jsonl, to_jsonl, JsonlError};
