//! Building blocks for summarizing German court judgments and evaluating the
//! results: corpus preparation, legal-entity enrichment, an extractive
//! LexRank baseline, model-backed generation, ROUGE/BERTScore scoring and
//! the seven-class human evaluation protocol with its agreement analytics.

pub mod corpus;
pub mod entities;
pub mod evalframe;
pub mod http;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod summarize;
pub mod textproc;
