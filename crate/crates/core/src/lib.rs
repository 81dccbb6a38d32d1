//! Core of a human-in-the-loop evaluation platform for LLM answers to climate
//! questions: rating taxonomy, assistance-generation pipeline, question corpus
//! building, the rating-service state machine and the statistics suite.

pub mod analysis;
pub mod corpus;
pub mod domain;
pub mod evidence;
pub mod llm;
pub mod pipeline;
pub mod service;
