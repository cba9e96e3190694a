//! Lock-aware partial event completion for hand-object interaction
//! annotation.
//!
//! An annotator draws a span on the timeline; the engine proposes the
//! functional-contact onset, verb and noun under whatever the annotator has
//! already confirmed, and a supervisory controller decides how to ask.

pub mod completion;
pub mod config;
pub mod controller;
pub mod engine;
pub mod event;
pub mod exec;
pub mod hop;
pub mod ingest;
pub mod metrics;
pub mod session;
pub mod synth;
