//! Recursive prompt-driven tutoring engine.
//!
//! A question is routed to the concept or the coding workflow. Coding answers
//! are linted and run, and failures are fed back through buildup prompts
//! until the code passes or a budget runs out. Everything that happens is
//! recorded as session events.

pub mod bench;
pub mod clock;
pub mod config;
pub mod gateway;
pub mod orchestrator;
pub mod prompt;
pub mod router;
pub mod session;
pub mod verifier;
