//! Reminiscence chatbot engine.
//!
//! A photo collection is turned into a [`domain::MemoryTree`] (storyline,
//! scene activities, scene details) by [`builder`]; [`dialogue`] then walks a
//! user through every scene with a rule-based proactive strategy. [`baseline`]
//! is the naive photo-retrieval chatbot used for comparison and [`eval`]
//! holds the scripted-user harness and metrics.

pub mod baseline;
pub mod builder;
pub mod domain;
pub mod engine;
pub mod eval;
pub mod exec;
pub mod gateway;
pub mod dialogue;
pub mod synth;
pub mod text;

pub use exec::Exec;
