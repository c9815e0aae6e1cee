//! Equivalence scoring for Dafny code and formal specifications, with the
//! surrounding benchmark machinery: corpus loading, verifier orchestration,
//! spec-strength comparison, pass@k and complexity metrics, and LLM-driven
//! synthesis pipelines with deterministic record/replay.

pub mod corpus;
pub mod dafny;
pub mod harness;
pub mod parallel;
pub mod scoring;
pub mod synthesis;
pub mod verifier;
