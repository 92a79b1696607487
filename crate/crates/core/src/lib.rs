//! AMR-aware prefix generation for template-based event argument extraction.

pub mod amr;
pub mod config;
pub mod copy;
pub mod model;
pub mod prefix;
pub mod data;
pub mod eval;
pub mod parser_client;
pub mod pipeline;
pub mod prompting;
pub mod synthetic;
pub mod text;
pub mod train;
