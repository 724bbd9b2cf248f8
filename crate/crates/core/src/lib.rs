//! Prompt-faithfulness evaluation for text-to-image outputs.
//!
//! A prompt is parsed into triples and templated questions; each image is
//! turned into a scene graph through detection and VQA services; questions
//! are answered against the graph, wrong answers are typed as attribute,
//! relation, omission or extraneous errors, and each image gets a 1-7 score.
//! The [`stats`] module compares those scores with human ratings.

pub mod clients;
pub mod graph;
pub mod harness;
pub mod jsonl;
pub mod lexicon;
pub mod par;
pub mod prompt;
pub mod qa;
pub mod questions;
pub mod scoring;
pub mod stats;
pub mod text;

pub use graph::{GraphConfig, SceneGraph};
pub use harness::{ConfigError, RunConfig};
pub use lexicon::{AttributeKind, Lexicon, Resources, SynonymTable};
pub use prompt::{parse_prompt, triples_of, PromptSpec, Triple};
pub use questions::{generate_questions, Question};
pub use scoring::{score, HallucinationReport, Score};
