//! Zero-shot NER toolkit built around externally hosted instruction-following
//! LLMs: dataset curation with controlled train/test tag overlap, guideline
//! generation and prompt rendering, per-tag inference orchestration with
//! document chunking, robust output parsing, and strict span-level evaluation
//! with multi-run statistics.

pub mod chunking;
pub mod corpus;
pub mod curation;
pub mod evaluation;
pub mod guidelines;
pub mod inference;
pub mod llm;
pub mod model;
pub mod prompting;
