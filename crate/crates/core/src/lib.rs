//! Interview-style evaluation of chat models.
//!
//! One model (the interviewer) drives a structured interview of another (the
//! interviewee): it rewrites benchmark questions so they cannot be answered
//! from memory, grades each answer, feeds back on mistakes and elicits
//! revisions, poses typed follow-up questions, and finally aggregates
//! everything into scores, an interview report, and reliability analyses.
//!
//! Module map:
//! - [`domain`]: shared value types and the canonical transcript record
//! - [`agents`]: chat-completion client, scripted test agent, structured output
//! - [`prompts`]: task profiles and prompt templates
//! - [`seedprep`]: contamination-resistant question rewrites
//! - [`engine`]: the interview state machine and batch runner
//! - [`grading`]: binary and fact-precision judgment
//! - [`followup`]: typed follow-up question generation
//! - [`metrics`]: score aggregation
//! - [`report`]: report assembly and summarization
//! - [`analysis`]: verbosity, self-enhancement, robustness, contamination
//! - [`store`]: transcript JSONL persistence

pub mod agents;
pub mod analysis;
pub mod domain;
pub mod engine;
pub mod followup;
pub mod grading;
pub mod metrics;
pub mod prompts;
pub mod report;
pub mod seedprep;
pub mod special;
pub mod store;
